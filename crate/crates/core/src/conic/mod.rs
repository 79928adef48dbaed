//! Solver-agnostic conic program representation and continuous solves.
//!
//! A [`ConicProgram`] holds bounded variables (continuous or binary), linear
//! rows `aᵀx {≤,=,≥} b`, second-order cone rows `‖Ax + c‖₂ ≤ dᵀx + e` and a
//! separable convex quadratic objective `Σ ½qᵢxᵢ² + Σ cᵢxᵢ + k`.
//!
//! # Dual sign convention
//!
//! Reported multipliers follow the shadow-price convention:
//!
//! * equality `aᵀx = b`: the dual is `∂objective/∂b`;
//! * `aᵀx ≤ b`: the dual is `−∂objective/∂b ≥ 0`;
//! * `aᵀx ≥ b`: the dual is `∂objective/∂b ≥ 0`.
//!
//! With a nodal balance written as `generation − flows = demand`, the dual of
//! that row is the marginal cost of serving one more unit of demand.

mod clarabel_backend;
mod reference;
mod transform;

use std::fmt::{self, Write as _};
use std::time::Duration;

use thiserror::Error;

pub use clarabel_backend::ClarabelBackend;
pub use reference::DenseSimplex;
pub use transform::{objective_level_set, quadratic_to_socp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarRef(usize);

impl VarRef {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstraintRef(usize);

impl ConstraintRef {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConeRef(usize);

impl ConeRef {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
    /// Optional initial value; backends may ignore it.
    pub start: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

/// Affine expression `Σ coef·x + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub terms: Vec<(VarRef, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(v: VarRef) -> Self {
        AffineExpr {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, v: VarRef, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
        self
    }

    pub fn plus(mut self, constant: f64) -> Self {
        self.constant += constant;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(VarRef, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.lhs(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }

    /// Non-negative slack of an inequality (0 for equalities).
    pub fn slack(&self, x: &[f64]) -> f64 {
        let lhs = self.lhs(x);
        match self.sense {
            Sense::Le => self.rhs - lhs,
            Sense::Ge => lhs - self.rhs,
            Sense::Eq => 0.0,
        }
    }
}

/// `‖body‖₂ ≤ head`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub name: String,
    pub head: AffineExpr,
    pub body: Vec<AffineExpr>,
}

impl SocConstraint {
    pub fn violation(&self, x: &[f64]) -> f64 {
        let norm = self.body.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
        (norm - self.head.eval(x)).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Objective {
    /// `(x, q)` pairs contributing `½·q·x²`.
    pub quadratic: Vec<(VarRef, f64)>,
    pub linear: Vec<(VarRef, f64)>,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProgram {
    vars: Vec<Variable>,
    linear: Vec<LinearConstraint>,
    cones: Vec<SocConstraint>,
    objective: Objective,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarRef {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            kind: VarKind::Continuous,
            start: None,
        });
        VarRef(self.vars.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarRef {
        let v = self.add_var(name, 0.0, 1.0);
        self.vars[v.0].kind = VarKind::Binary;
        v
    }

    pub fn add_linear(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarRef, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> ConstraintRef {
        self.linear.push(LinearConstraint {
            name: name.into(),
            terms: terms.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            sense,
            rhs,
        });
        ConstraintRef(self.linear.len() - 1)
    }

    pub fn add_cone(&mut self, name: impl Into<String>, head: AffineExpr, body: Vec<AffineExpr>) -> ConeRef {
        self.cones.push(SocConstraint {
            name: name.into(),
            head,
            body,
        });
        ConeRef(self.cones.len() - 1)
    }

    pub fn add_objective_linear(&mut self, v: VarRef, coef: f64) {
        if coef != 0.0 {
            self.objective.linear.push((v, coef));
        }
    }

    /// Adds `½·q·v²` to the objective.
    pub fn add_objective_quadratic(&mut self, v: VarRef, q: f64) {
        if q != 0.0 {
            self.objective.quadratic.push((v, q));
        }
    }

    pub fn add_objective_constant(&mut self, k: f64) {
        self.objective.constant += k;
    }

    pub fn set_bounds(&mut self, v: VarRef, lower: f64, upper: f64) {
        let var = &mut self.vars[v.0];
        var.lower = lower;
        var.upper = upper;
    }

    pub fn set_start(&mut self, v: VarRef, value: f64) {
        self.vars[v.0].start = Some(value);
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_linear(&self) -> usize {
        self.linear.len()
    }

    pub fn num_cones(&self) -> usize {
        self.cones.len()
    }

    pub fn var(&self, v: VarRef) -> &Variable {
        &self.vars[v.0]
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn linear(&self, c: ConstraintRef) -> &LinearConstraint {
        &self.linear[c.0]
    }

    pub fn linear_constraints(&self) -> &[LinearConstraint] {
        &self.linear
    }

    pub fn cone(&self, c: ConeRef) -> &SocConstraint {
        &self.cones[c.0]
    }

    pub fn cones(&self) -> &[SocConstraint] {
        &self.cones
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn var_refs(&self) -> impl Iterator<Item = VarRef> {
        (0..self.vars.len()).map(VarRef)
    }

    pub fn constraint_refs(&self) -> impl Iterator<Item = ConstraintRef> {
        (0..self.linear.len()).map(ConstraintRef)
    }

    pub fn binaries(&self) -> Vec<VarRef> {
        self.var_refs()
            .filter(|&v| self.vars[v.0].kind == VarKind::Binary)
            .collect()
    }

    /// Copy with every binary treated as a continuous variable on its bounds.
    pub fn relaxed(&self) -> ConicProgram {
        let mut out = self.clone();
        for var in &mut out.vars {
            var.kind = VarKind::Continuous;
        }
        out
    }

    pub fn eval_objective(&self, x: &[f64]) -> f64 {
        let o = &self.objective;
        o.constant
            + o.linear.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
            + o.quadratic.iter().map(|&(v, q)| 0.5 * q * x[v.0] * x[v.0]).sum::<f64>()
    }

    /// Largest violation of any bound, linear row or cone at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = self
            .vars
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.lower - xi).max(xi - v.upper).max(0.0));
        let rows = self.linear.iter().map(|r| r.violation(x));
        let cones = self.cones.iter().map(|c| c.violation(x));
        bounds.chain(rows).chain(cones).fold(0.0, f64::max)
    }

    /// Structural checks on references, bounds and convexity.
    pub fn validate(&self) -> Result<(), ConicError> {
        let n = self.vars.len();
        let check = |v: VarRef, what: &str| {
            if v.0 < n {
                Ok(())
            } else {
                Err(ConicError::InvalidProgram(format!("{what} references variable {}", v.0)))
            }
        };
        for var in &self.vars {
            if var.lower.is_nan() || var.upper.is_nan() || var.lower > var.upper {
                return Err(ConicError::InvalidProgram(format!(
                    "variable {} has bounds [{}, {}]",
                    var.name, var.lower, var.upper
                )));
            }
        }
        for row in &self.linear {
            for &(v, c) in &row.terms {
                check(v, &row.name)?;
                if !c.is_finite() {
                    return Err(ConicError::InvalidProgram(format!("row {} has coefficient {c}", row.name)));
                }
            }
            if !row.rhs.is_finite() {
                return Err(ConicError::InvalidProgram(format!("row {} has rhs {}", row.name, row.rhs)));
            }
        }
        for cone in &self.cones {
            for expr in std::iter::once(&cone.head).chain(&cone.body) {
                for &(v, _) in &expr.terms {
                    check(v, &cone.name)?;
                }
            }
        }
        for &(v, q) in &self.objective.quadratic {
            check(v, "objective")?;
            if !(q >= 0.0) {
                return Err(ConicError::Unsupported(format!(
                    "objective term on {} is not convex (q = {q})",
                    self.vars[v.0].name
                )));
            }
        }
        for &(v, _) in &self.objective.linear {
            check(v, "objective")?;
        }
        Ok(())
    }

    /// Text dump, one item per line, for diffing.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let name = |v: &VarRef| self.vars[v.0].name.as_str();
        let fmt_terms = |terms: &[(VarRef, f64)], constant: f64| {
            let mut s = String::new();
            for (k, (v, c)) in terms.iter().enumerate() {
                if k > 0 {
                    s.push_str(" + ");
                }
                let _ = write!(s, "{c} {}", name(v));
            }
            if constant != 0.0 || terms.is_empty() {
                if !terms.is_empty() {
                    s.push_str(" + ");
                }
                let _ = write!(s, "{constant}");
            }
            s
        };
        for var in &self.vars {
            let kind = match var.kind {
                VarKind::Continuous => "",
                VarKind::Binary => " binary",
            };
            let _ = writeln!(out, "var {} [{}, {}]{kind}", var.name, var.lower, var.upper);
        }
        for row in &self.linear {
            let _ = writeln!(out, "row {}: {} {} {}", row.name, fmt_terms(&row.terms, 0.0), row.sense, row.rhs);
        }
        for cone in &self.cones {
            let body: Vec<String> = cone.body.iter().map(|e| fmt_terms(&e.terms, e.constant)).collect();
            let _ = writeln!(
                out,
                "soc {}: ||({})|| <= {}",
                cone.name,
                body.join("; "),
                fmt_terms(&cone.head.terms, cone.head.constant)
            );
        }
        let quad: Vec<String> = self
            .objective
            .quadratic
            .iter()
            .map(|(v, q)| format!("0.5*{q} {}^2", name(v)))
            .collect();
        let _ = writeln!(
            out,
            "min {}{}{}",
            quad.join(" + "),
            if quad.is_empty() { "" } else { " + " },
            fmt_terms(&self.objective.linear, self.objective.constant)
        );
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    TimeLimit,
    NumericalError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    /// One multiplier per linear row, in the shadow-price convention.
    pub duals: Vec<f64>,
    /// Dual cone vectors, one per cone row.
    pub cone_duals: Vec<Vec<f64>>,
    pub objective: f64,
    pub solve_time: f64,
    pub iterations: u32,
}

impl ConicSolution {
    pub fn failed(status: SolveStatus, solve_time: f64) -> Self {
        ConicSolution {
            status,
            primal: Vec::new(),
            duals: Vec::new(),
            cone_duals: Vec::new(),
            objective: f64::NAN,
            solve_time,
            iterations: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, v: VarRef) -> f64 {
        self.primal[v.0]
    }

    /// Multiplier of a linear row.
    pub fn dual(&self, c: ConstraintRef) -> Result<f64, ConicError> {
        if self.status != SolveStatus::Optimal {
            return Err(ConicError::NotOptimal(self.status));
        }
        self.duals.get(c.0).copied().ok_or(ConicError::UnknownConstraint(c.0))
    }
}

/// Free function form of [`ConicSolution::dual`].
pub fn dual(solution: &ConicSolution, c: ConstraintRef) -> Result<f64, ConicError> {
    solution.dual(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub time_limit: Option<Duration>,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            time_limit: None,
            max_iter: 200,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConicError {
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("{0} binary variables are neither relaxed nor fixed")]
    IntegerVariables(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("unknown constraint {0}")]
    UnknownConstraint(usize),
    #[error("solution is not optimal ({0:?})")]
    NotOptimal(SolveStatus),
    #[error("backend failure: {0}")]
    Backend(String),
}

/// A continuous conic solver. Implementations must be deterministic for
/// fixed inputs and safe to call from several threads.
pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn solve(&self, program: &ConicProgram, options: &SolveOptions) -> Result<ConicSolution, ConicError>;
}

/// Rejects programs that still carry free binary variables.
pub fn ensure_continuous(program: &ConicProgram) -> Result<(), ConicError> {
    let free = program
        .vars()
        .iter()
        .filter(|v| v.kind == VarKind::Binary && v.lower != v.upper)
        .count();
    if free > 0 {
        Err(ConicError::IntegerVariables(free))
    } else {
        Ok(())
    }
}

/// Solves a program without free binaries using the default interior-point backend.
pub fn solve_continuous(program: &ConicProgram, options: &SolveOptions) -> Result<ConicSolution, ConicError> {
    ensure_continuous(program)?;
    ClarabelBackend.solve(program, options)
}
