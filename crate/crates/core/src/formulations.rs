//! Optimization models built from a [`Network`].
//!
//! Every builder returns a [`ModelHandle`]: the solver-agnostic program plus
//! index maps from network entities to variables and rows. Costs are in $/h
//! on MW dispatch, so row duals are in $/(pu·h) and divide by `base_mva` to
//! give $/MWh.
//!
//! Row orientation is fixed so that duals read as prices: every P-balance row
//! is `generation − outgoing flow − shunt = demand`, and every thermal limit
//! row has the rating (or zero) on the right-hand side.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::conic::{
    objective_level_set, solve_continuous, AffineExpr, ConeRef, ConicProgram, ConicSolution, ConstraintRef, Sense,
    SolveOptions, SolveStatus, VarRef,
};
use crate::mibb::{fix_binaries, solve_misocp, MibbOptions, MibbResult, MibbStatus};
use crate::netmodel::{validate, BranchAdmittance, Generator, Network, Severity};
use crate::Error;

pub const DEFAULT_BIG_M: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FormulationKind {
    #[serde(rename = "dc")]
    DcOpf,
    #[serde(rename = "dc-ots")]
    DcOts,
    #[serde(rename = "socp")]
    SocpAcOpf,
    #[serde(rename = "socp-mce")]
    SocpAcOpfMce,
    #[serde(rename = "ots-misocp")]
    OtsMisocpMce,
}

impl FormulationKind {
    pub const ALL: [FormulationKind; 5] = [
        FormulationKind::DcOpf,
        FormulationKind::DcOts,
        FormulationKind::SocpAcOpf,
        FormulationKind::SocpAcOpfMce,
        FormulationKind::OtsMisocpMce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FormulationKind::DcOpf => "dc",
            FormulationKind::DcOts => "dc-ots",
            FormulationKind::SocpAcOpf => "socp",
            FormulationKind::SocpAcOpfMce => "socp-mce",
            FormulationKind::OtsMisocpMce => "ots-misocp",
        }
    }

    pub fn is_dc(self) -> bool {
        matches!(self, FormulationKind::DcOpf | FormulationKind::DcOts)
    }

    pub fn is_switching(self) -> bool {
        matches!(self, FormulationKind::DcOts | FormulationKind::OtsMisocpMce)
    }
}

impl fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormulationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        FormulationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown formulation {s:?}")))
    }
}

/// How a line's thermal limit appears in the program.
#[derive(Debug, Clone, PartialEq)]
pub enum LimitRows {
    /// No rating.
    None,
    /// DC flow `≤` and `≥` rows; FMP is `(upper − lower)/base`.
    DcBox { upper: ConstraintRef, lower: ConstraintRef },
    /// Capacity row `S = f̄` (or `S − f̄·a = 0`) feeding both end cones;
    /// FMP is `−dual/base`.
    Capacity { row: ConstraintRef, cones: [ConeRef; 2] },
}

/// Handles for one in-service branch. Fields that do not exist in a
/// formulation are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineHandle {
    pub from: usize,
    pub to: usize,
    /// `a_ij` / `z_ik`: 1 closed, 0 open. Only switchable lines in switching
    /// formulations have one.
    pub switch: Option<VarRef>,
    /// DC susceptance `1/(x·tap)` and phase shift used in DC models.
    pub dc_b: f64,
    pub dc_shift: f64,
    /// DC-OTS flow variable.
    pub flow: Option<VarRef>,
    /// SOCP flows `[p_ij, p_ji]` and `[q_ij, q_ji]`.
    pub p: Option<[VarRef; 2]>,
    pub q: Option<[VarRef; 2]>,
    pub c: Option<VarRef>,
    pub s: Option<VarRef>,
    pub w: Option<VarRef>,
    /// Angle difference seen by the envelope; a variable in OTS models.
    pub phi: Option<VarRef>,
    pub capacity: Option<VarRef>,
    pub limit: LimitRows,
    pub voltage_cone: Option<ConeRef>,
    pub mce_rows: Vec<ConstraintRef>,
    pub big_m_rows: Vec<ConstraintRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelHandle {
    pub kind: FormulationKind,
    pub program: ConicProgram,
    pub base_mva: f64,
    pub pg: Vec<VarRef>,
    pub qg: Vec<Option<VarRef>>,
    pub e: Vec<Option<VarRef>>,
    pub theta: Vec<Option<VarRef>>,
    /// One entry per network branch; `None` for out-of-service branches.
    pub lines: Vec<Option<LineHandle>>,
    pub p_balance: Vec<ConstraintRef>,
    pub q_balance: Vec<Option<ConstraintRef>>,
    pub budget_row: Option<ConstraintRef>,
    pub big_m: f64,
    pub budget: Option<usize>,
    pub warnings: Vec<String>,
}

impl ModelHandle {
    pub fn num_buses(&self) -> usize {
        self.p_balance.len()
    }

    /// Binary switch variables in branch order, with their branch index.
    pub fn switches(&self) -> Vec<(usize, VarRef)> {
        self.lines
            .iter()
            .enumerate()
            .filter_map(|(k, l)| l.as_ref().and_then(|l| l.switch).map(|v| (k, v)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFlow {
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub formulation: FormulationKind,
    pub objective: f64,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    /// Squared voltage magnitude per bus; 1 in DC models.
    pub e: Vec<f64>,
    pub theta: Option<Vec<f64>>,
    pub flows: Vec<LineFlow>,
    /// True for branches out of service in the input or opened by the model.
    pub open: Vec<bool>,
    /// Branches opened by the model (in service in the input).
    pub switched_open: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MceBounds {
    pub c_lo: f64,
    pub c_hi: f64,
    pub s_lo: f64,
    pub s_hi: f64,
}

/// Bounds on `c = V_iV_j cos θ` and `s = V_iV_j sin θ` for magnitudes in
/// `[v_min, v_max]` and an angle difference in `[θ_lo, θ_hi]`.
pub fn mce_bounds(v_min: f64, v_max: f64, theta_lo: f64, theta_hi: f64) -> Result<MceBounds, Error> {
    if !(v_min > 0.0 && v_min <= v_max) {
        return Err(Error::InvalidArgument(format!(
            "voltage bounds [{v_min}, {v_max}] must satisfy 0 < v_min <= v_max"
        )));
    }
    if !(theta_lo <= 0.0 && 0.0 <= theta_hi) {
        return Err(Error::InvalidArgument(format!(
            "angle bounds [{theta_lo}, {theta_hi}] must bracket zero"
        )));
    }
    let widest = theta_lo.abs().max(theta_hi);
    let cos = widest.cos();
    let c_lo = if cos >= 0.0 { v_min * v_min * cos } else { v_max * v_max * cos };
    let s = v_max * v_max * widest.min(FRAC_PI_2).sin();
    Ok(MceBounds {
        c_lo,
        c_hi: v_max * v_max,
        s_lo: -s,
        s_hi: s,
    })
}

struct Prepared<'a> {
    net: &'a Network,
    bus_of: Vec<(usize, usize)>,
    gen_bus: Vec<usize>,
    slack: usize,
}

fn prepare(network: &Network) -> Result<Prepared<'_>, Error> {
    let slack = network.slack_index()?;
    let errors: Vec<String> = validate(network)
        .into_iter()
        .filter(|v| v.severity == Severity::Error)
        .map(|v| v.to_string())
        .collect();
    if !errors.is_empty() {
        return Err(Error::InvalidNetwork(errors.join("; ")));
    }
    let idx = network.indexed()?;
    Ok(Prepared {
        net: network,
        bus_of: idx.branch_ends,
        gen_bus: idx.gen_bus,
        slack,
    })
}

fn add_generators(program: &mut ConicProgram, net: &Network, reactive: bool) -> (Vec<VarRef>, Vec<Option<VarRef>>) {
    let mut pg = Vec::with_capacity(net.generators.len());
    let mut qg = Vec::with_capacity(net.generators.len());
    for (k, g) in net.generators.iter().enumerate() {
        let p = program.add_var(format!("pg[{k}]"), g.p_min, g.p_max);
        add_cost(program, p, g, net.base_mva);
        pg.push(p);
        qg.push(reactive.then(|| program.add_var(format!("qg[{k}]"), g.q_min, g.q_max)));
    }
    (pg, qg)
}

/// `c2·(base·p)² + c1·base·p + c0`.
fn add_cost(program: &mut ConicProgram, p: VarRef, g: &Generator, base: f64) {
    program.add_objective_quadratic(p, 2.0 * g.c2 * base * base);
    program.add_objective_linear(p, g.c1 * base);
    program.add_objective_constant(g.c0);
}

/// Terms `Σ_k coef_k·x_k` with `x` kept symbolic; helper for row assembly.
#[derive(Default)]
struct Terms(Vec<(VarRef, f64)>);

impl Terms {
    fn add(&mut self, v: VarRef, c: f64) -> &mut Self {
        self.0.push((v, c));
        self
    }

    fn with(&self, extra: &[(VarRef, f64)]) -> Vec<(VarRef, f64)> {
        let mut out = self.0.clone();
        out.extend_from_slice(extra);
        out
    }
}

fn switchable_in_model(net: &Network, k: usize, switching: bool) -> bool {
    let br = &net.branches[k];
    switching && br.status && br.switchable
}

fn add_budget(
    program: &mut ConicProgram,
    lines: &[Option<LineHandle>],
    budget: Option<usize>,
) -> Option<ConstraintRef> {
    let budget = budget?;
    let switches: Vec<(VarRef, f64)> = lines
        .iter()
        .filter_map(|l| l.as_ref().and_then(|l| l.switch))
        .map(|v| (v, 1.0))
        .collect();
    // Σ(1 − a) ≤ N  ⇔  Σa ≥ n_sw − N
    let rhs = switches.len() as f64 - budget as f64;
    Some(program.add_linear("budget", switches, Sense::Ge, rhs))
}

pub fn build_dc_opf(network: &Network) -> Result<ModelHandle, Error> {
    build_dc(network, FormulationKind::DcOpf, None, DEFAULT_BIG_M)
}

pub fn build_dc_ots(network: &Network, budget: Option<usize>) -> Result<ModelHandle, Error> {
    build_dc(network, FormulationKind::DcOts, budget, DEFAULT_BIG_M)
}

pub fn build_dc_ots_with_big_m(network: &Network, budget: Option<usize>, big_m: f64) -> Result<ModelHandle, Error> {
    check_big_m(big_m)?;
    build_dc(network, FormulationKind::DcOts, budget, big_m)
}

fn check_big_m(big_m: f64) -> Result<(), Error> {
    if big_m > 0.0 && big_m.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("big-M must be positive, got {big_m}")))
    }
}

fn build_dc(network: &Network, kind: FormulationKind, budget: Option<usize>, big_m: f64) -> Result<ModelHandle, Error> {
    let prep = prepare(network)?;
    let net = prep.net;
    let switching = kind.is_switching();
    let n = net.buses.len();
    let mut program = ConicProgram::new();
    let mut warnings = Vec::new();
    let (pg, qg) = add_generators(&mut program, net, false);
    let theta: Vec<VarRef> = (0..n)
        .map(|i| {
            if i == prep.slack {
                program.add_var(format!("theta[{i}]"), 0.0, 0.0)
            } else {
                program.add_var(format!("theta[{i}]"), f64::NEG_INFINITY, f64::INFINITY)
            }
        })
        .collect();

    // Net outgoing flow per bus as terms plus a constant.
    let mut outflow: Vec<Terms> = (0..n).map(|_| Terms::default()).collect();
    let mut outconst = vec![0.0; n];
    let mut lines = Vec::with_capacity(net.branches.len());
    for (k, br) in net.branches.iter().enumerate() {
        if !br.status {
            lines.push(None);
            continue;
        }
        let (f, t) = prep.bus_of[k];
        let b = 1.0 / (br.x * br.tap);
        let sigma = br.shift;
        let mut handle = LineHandle {
            from: f,
            to: t,
            switch: None,
            dc_b: b,
            dc_shift: sigma,
            flow: None,
            p: None,
            q: None,
            c: None,
            s: None,
            w: None,
            phi: None,
            capacity: None,
            limit: LimitRows::None,
            voltage_cone: None,
            mce_rows: Vec::new(),
            big_m_rows: Vec::new(),
        };
        if switchable_in_model(net, k, switching) {
            let z = program.add_binary(format!("z[{k}]"));
            let flow = program.add_var(format!("f[{k}]"), f64::NEG_INFINITY, f64::INFINITY);
            // |f − b(θf − θt − σ)| ≤ (1 − z)M
            let def = [(flow, 1.0), (theta[f], -b), (theta[t], b)];
            let mut up = def.to_vec();
            up.push((z, big_m));
            let mut lo = def.to_vec();
            lo.push((z, -big_m));
            handle.big_m_rows.push(program.add_linear(format!("flowdef_up[{k}]"), up, Sense::Le, big_m - b * sigma));
            handle.big_m_rows.push(program.add_linear(format!("flowdef_lo[{k}]"), lo, Sense::Ge, -big_m - b * sigma));
            let cap = if br.has_rate() { br.rate } else { big_m };
            if br.rate > big_m {
                warnings.push(format!("branch {k}: rating {} pu exceeds big-M {big_m}", br.rate));
            }
            let upper = program.add_linear(format!("flowlim_up[{k}]"), vec![(flow, 1.0), (z, -cap)], Sense::Le, 0.0);
            let lower = program.add_linear(format!("flowlim_lo[{k}]"), vec![(flow, 1.0), (z, cap)], Sense::Ge, 0.0);
            if br.has_rate() {
                handle.limit = LimitRows::DcBox { upper, lower };
            } else {
                handle.big_m_rows.extend([upper, lower]);
            }
            let ang = [(theta[f], 1.0), (theta[t], -1.0)];
            let mut up = ang.to_vec();
            up.push((z, big_m));
            let mut lo = ang.to_vec();
            lo.push((z, -big_m));
            handle.big_m_rows.push(program.add_linear(format!("angle_up[{k}]"), up, Sense::Le, br.angle_max + big_m));
            handle.big_m_rows.push(program.add_linear(format!("angle_lo[{k}]"), lo, Sense::Ge, br.angle_min - big_m));
            outflow[f].add(flow, 1.0);
            outflow[t].add(flow, -1.0);
            handle.switch = Some(z);
            handle.flow = Some(flow);
        } else {
            let terms = [(theta[f], b), (theta[t], -b)];
            if br.has_rate() {
                let upper = program.add_linear(format!("flowlim_up[{k}]"), terms.to_vec(), Sense::Le, br.rate + b * sigma);
                let lower = program.add_linear(format!("flowlim_lo[{k}]"), terms.to_vec(), Sense::Ge, -br.rate + b * sigma);
                handle.limit = LimitRows::DcBox { upper, lower };
            }
            let ang = vec![(theta[f], 1.0), (theta[t], -1.0)];
            program.add_linear(format!("angle_up[{k}]"), ang.clone(), Sense::Le, br.angle_max);
            program.add_linear(format!("angle_lo[{k}]"), ang, Sense::Ge, br.angle_min);
            outflow[f].add(theta[f], b).add(theta[t], -b);
            outflow[t].add(theta[f], -b).add(theta[t], b);
            outconst[f] -= b * sigma;
            outconst[t] += b * sigma;
        }
        lines.push(Some(handle));
    }

    let mut p_balance = Vec::with_capacity(n);
    for (i, bus) in net.buses.iter().enumerate() {
        let mut terms: Vec<(VarRef, f64)> = prep
            .gen_bus
            .iter()
            .enumerate()
            .filter(|&(_, &b)| b == i)
            .map(|(g, _)| (pg[g], 1.0))
            .collect();
        terms.extend(outflow[i].0.iter().map(|&(v, c)| (v, -c)));
        p_balance.push(program.add_linear(format!("pbal[{i}]"), terms, Sense::Eq, bus.p_demand + outconst[i]));
    }
    let budget_row = if switching { add_budget(&mut program, &lines, budget) } else { None };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ModelHandle {
        kind,
        program,
        base_mva: net.base_mva,
        pg,
        qg,
        e: vec![None; n],
        theta: theta.into_iter().map(Some).collect(),
        lines,
        p_balance,
        q_balance: vec![None; n],
        budget_row,
        big_m,
        budget: if switching { budget } else { None },
        warnings,
    })
}

pub fn build_socp_acopf(network: &Network, with_mce: bool) -> Result<ModelHandle, Error> {
    let kind = if with_mce {
        FormulationKind::SocpAcOpfMce
    } else {
        FormulationKind::SocpAcOpf
    };
    build_socp(network, kind, None, DEFAULT_BIG_M)
}

pub fn build_ots_misocp(network: &Network, budget: Option<usize>, big_m: f64) -> Result<ModelHandle, Error> {
    check_big_m(big_m)?;
    build_socp(network, FormulationKind::OtsMisocpMce, budget, big_m)
}

/// `lhs_terms + M·a ≤ M + rhs` and `lhs_terms − M·a ≥ −M + rhs`, i.e.
/// `|lhs − rhs| ≤ (1 − a)M`.
fn add_big_m_pair(
    program: &mut ConicProgram,
    name: &str,
    terms: &[(VarRef, f64)],
    rhs: f64,
    a: VarRef,
    big_m: f64,
) -> [ConstraintRef; 2] {
    let mut up = terms.to_vec();
    up.push((a, big_m));
    let mut lo = terms.to_vec();
    lo.push((a, -big_m));
    [
        program.add_linear(format!("{name}_up"), up, Sense::Le, big_m + rhs),
        program.add_linear(format!("{name}_lo"), lo, Sense::Ge, -big_m + rhs),
    ]
}

fn build_socp(network: &Network, kind: FormulationKind, budget: Option<usize>, big_m: f64) -> Result<ModelHandle, Error> {
    let prep = prepare(network)?;
    let net = prep.net;
    let switching = kind.is_switching();
    let with_mce = matches!(kind, FormulationKind::SocpAcOpfMce | FormulationKind::OtsMisocpMce);
    let n = net.buses.len();
    let mut program = ConicProgram::new();
    let mut warnings = Vec::new();
    let (pg, qg) = add_generators(&mut program, net, true);
    let e: Vec<VarRef> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| program.add_var(format!("e[{i}]"), b.v_min * b.v_min, b.v_max * b.v_max))
        .collect();
    let theta: Vec<Option<VarRef>> = (0..n)
        .map(|i| {
            with_mce.then(|| {
                if i == prep.slack {
                    program.add_var(format!("theta[{i}]"), 0.0, 0.0)
                } else {
                    program.add_var(format!("theta[{i}]"), f64::NEG_INFINITY, f64::INFINITY)
                }
            })
        })
        .collect();

    let mut p_out: Vec<Terms> = (0..n).map(|_| Terms::default()).collect();
    let mut q_out: Vec<Terms> = (0..n).map(|_| Terms::default()).collect();
    let mut lines = Vec::with_capacity(net.branches.len());
    for (k, br) in net.branches.iter().enumerate() {
        if !br.status {
            lines.push(None);
            continue;
        }
        let (f, t) = prep.bus_of[k];
        let (bf, bt) = (&net.buses[f], &net.buses[t]);
        let bounds = mce_bounds(
            (bf.v_min * bt.v_min).sqrt(),
            (bf.v_max * bt.v_max).sqrt(),
            br.angle_min,
            br.angle_max,
        )?;
        let y = BranchAdmittance::of(br);
        let a = switchable_in_model(net, k, switching).then(|| program.add_binary(format!("a[{k}]")));
        let c = program.add_var(format!("c[{k}]"), bounds.c_lo, bounds.c_hi);
        let s = program.add_var(format!("s[{k}]"), bounds.s_lo, bounds.s_hi);
        let pf = program.add_var(format!("p[{k}].from"), f64::NEG_INFINITY, f64::INFINITY);
        let pt = program.add_var(format!("p[{k}].to"), f64::NEG_INFINITY, f64::INFINITY);
        let qf = program.add_var(format!("q[{k}].from"), f64::NEG_INFINITY, f64::INFINITY);
        let qt = program.add_var(format!("q[{k}].to"), f64::NEG_INFINITY, f64::INFINITY);
        let mut handle = LineHandle {
            from: f,
            to: t,
            switch: a,
            dc_b: 1.0 / (br.x * br.tap),
            dc_shift: br.shift,
            flow: None,
            p: Some([pf, pt]),
            q: Some([qf, qt]),
            c: Some(c),
            s: Some(s),
            w: None,
            phi: None,
            capacity: None,
            limit: LimitRows::None,
            voltage_cone: None,
            mce_rows: Vec::new(),
            big_m_rows: Vec::new(),
        };

        // Flow definitions from the branch two-port:
        //   P_f =  G_ff e_f + G_ft c + B_ft s     Q_f = −B_ff e_f + G_ft s − B_ft c
        //   P_t =  G_tt e_t + G_tf c − B_tf s     Q_t = −B_tt e_t − G_tf s − B_tf c
        let (gff, bff) = (y.yff.re, y.yff.im);
        let (gft, bft) = (y.yft.re, y.yft.im);
        let (gtf, btf) = (y.ytf.re, y.ytf.im);
        let (gtt, btt) = (y.ytt.re, y.ytt.im);
        let defs = [
            ("pdef_from", pf, vec![(e[f], gff), (c, gft), (s, bft)]),
            ("qdef_from", qf, vec![(e[f], -bff), (s, gft), (c, -bft)]),
            ("pdef_to", pt, vec![(e[t], gtt), (c, gtf), (s, -btf)]),
            ("qdef_to", qt, vec![(e[t], -btt), (s, -gtf), (c, -btf)]),
        ];
        for (name, flow, expr) in defs {
            let mut terms = vec![(flow, 1.0)];
            terms.extend(expr.iter().map(|&(v, coef)| (v, -coef)));
            match a {
                None => {
                    program.add_linear(format!("{name}[{k}]"), terms, Sense::Eq, 0.0);
                }
                Some(a) => {
                    let reach: f64 = expr
                        .iter()
                        .map(|&(v, coef)| coef.abs() * program.var(v).upper.abs().max(program.var(v).lower.abs()))
                        .sum();
                    if reach > big_m {
                        warnings.push(format!(
                            "branch {k}: {name} magnitude may reach {reach:.1} pu, above big-M {big_m}"
                        ));
                    }
                    let rows = add_big_m_pair(&mut program, &format!("{name}[{k}]"), &terms, 0.0, a, big_m);
                    handle.big_m_rows.extend(rows);
                    let up = program.add_linear(format!("{name}_cap_up[{k}]"), vec![(flow, 1.0), (a, -big_m)], Sense::Le, 0.0);
                    let lo = program.add_linear(format!("{name}_cap_lo[{k}]"), vec![(flow, 1.0), (a, big_m)], Sense::Ge, 0.0);
                    handle.big_m_rows.extend([up, lo]);
                }
            }
        }

        if a.is_some() {
            // Losses are non-negative on every integral point; these rows are
            // implied by the cone on closed lines but bind when `a` is
            // fractional, where relaxed flow definitions could create power.
            handle.big_m_rows.push(program.add_linear(
                format!("loss_p[{k}]"),
                vec![(pf, 1.0), (pt, 1.0)],
                Sense::Ge,
                0.0,
            ));
            let half_b = br.b_sh / 2.0;
            handle.big_m_rows.push(program.add_linear(
                format!("loss_q[{k}]"),
                vec![(qf, 1.0), (qt, 1.0), (e[f], half_b / (br.tap * br.tap)), (e[t], half_b)],
                Sense::Ge,
                0.0,
            ));
        }

        // ‖(2c, 2s, e_f − e_t)‖ ≤ e_f + e_t
        handle.voltage_cone = Some(program.add_cone(
            format!("voltage[{k}]"),
            AffineExpr::var(e[f]).term(e[t], 1.0),
            vec![
                AffineExpr::new().term(c, 2.0),
                AffineExpr::new().term(s, 2.0),
                AffineExpr::var(e[f]).term(e[t], -1.0),
            ],
        ));

        // Angle box through tan θ = s/c, valid since c > 0 inside ±π/2.
        if br.angle_max < FRAC_PI_2 {
            program.add_linear(format!("angle_tan_up[{k}]"), vec![(s, 1.0), (c, -br.angle_max.tan())], Sense::Le, 0.0);
        }
        if br.angle_min > -FRAC_PI_2 {
            program.add_linear(format!("angle_tan_lo[{k}]"), vec![(s, 1.0), (c, -br.angle_min.tan())], Sense::Ge, 0.0);
        }

        if br.has_rate() {
            let cap = program.add_var(format!("cap[{k}]"), 0.0, f64::INFINITY);
            let row = match a {
                None => program.add_linear(format!("rate[{k}]"), vec![(cap, 1.0)], Sense::Eq, br.rate),
                Some(a) => program.add_linear(format!("rate[{k}]"), vec![(cap, 1.0), (a, -br.rate)], Sense::Eq, 0.0),
            };
            let cones = [
                program.add_cone(
                    format!("flowlim[{k}].from"),
                    AffineExpr::var(cap),
                    vec![AffineExpr::var(pf), AffineExpr::var(qf)],
                ),
                program.add_cone(
                    format!("flowlim[{k}].to"),
                    AffineExpr::var(cap),
                    vec![AffineExpr::var(pt), AffineExpr::var(qt)],
                ),
            ];
            handle.capacity = Some(cap);
            handle.limit = LimitRows::Capacity { row, cones };
        }

        if with_mce {
            let (th_f, th_t) = (theta[f].expect("angle variable"), theta[t].expect("angle variable"));
            let w = program.add_var(format!("w[{k}]"), f64::NEG_INFINITY, f64::INFINITY);
            let phi_terms: Vec<(VarRef, f64)> = match a {
                None => {
                    let ang = vec![(th_f, 1.0), (th_t, -1.0)];
                    program.add_linear(format!("angle_up[{k}]"), ang.clone(), Sense::Le, br.angle_max);
                    program.add_linear(format!("angle_lo[{k}]"), ang.clone(), Sense::Ge, br.angle_min);
                    program.add_linear(format!("small_angle[{k}]"), vec![(w, 1.0), (s, -1.0)], Sense::Eq, 0.0);
                    ang
                }
                Some(a) => {
                    let phi = program.add_var(format!("phi[{k}]"), br.angle_min, br.angle_max);
                    let rows = add_big_m_pair(
                        &mut program,
                        &format!("angle_link[{k}]"),
                        &[(phi, 1.0), (th_f, -1.0), (th_t, 1.0)],
                        0.0,
                        a,
                        big_m,
                    );
                    handle.big_m_rows.extend(rows);
                    let rows = add_big_m_pair(
                        &mut program,
                        &format!("small_angle[{k}]"),
                        &[(w, 1.0), (s, -1.0)],
                        0.0,
                        a,
                        big_m,
                    );
                    handle.big_m_rows.extend(rows);
                    handle.phi = Some(phi);
                    vec![(phi, 1.0)]
                }
            };
            handle.w = Some(w);
            handle.mce_rows = add_mce_rows(&mut program, k, w, c, &phi_terms, &bounds, br.angle_min, br.angle_max);
        }

        p_out[f].add(pf, 1.0);
        p_out[t].add(pt, 1.0);
        q_out[f].add(qf, 1.0);
        q_out[t].add(qt, 1.0);
        lines.push(Some(handle));
    }

    let mut p_balance = Vec::with_capacity(n);
    let mut q_balance = Vec::with_capacity(n);
    for (i, bus) in net.buses.iter().enumerate() {
        let gens: Vec<usize> = (0..pg.len()).filter(|&g| prep.gen_bus[g] == i).collect();
        let mut pt: Vec<(VarRef, f64)> = gens.iter().map(|&g| (pg[g], 1.0)).collect();
        pt.extend(p_out[i].with(&[]).into_iter().map(|(v, c)| (v, -c)));
        pt.push((e[i], -bus.gs));
        p_balance.push(program.add_linear(format!("pbal[{i}]"), pt, Sense::Eq, bus.p_demand));
        let mut qt: Vec<(VarRef, f64)> = gens.iter().map(|&g| (qg[g].expect("reactive variable"), 1.0)).collect();
        qt.extend(q_out[i].with(&[]).into_iter().map(|(v, c)| (v, -c)));
        qt.push((e[i], bus.bs));
        q_balance.push(Some(program.add_linear(format!("qbal[{i}]"), qt, Sense::Eq, bus.q_demand)));
    }
    let budget_row = if switching { add_budget(&mut program, &lines, budget) } else { None };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ModelHandle {
        kind,
        program,
        base_mva: net.base_mva,
        pg,
        qg,
        e: e.into_iter().map(Some).collect(),
        theta,
        lines,
        p_balance,
        q_balance,
        budget_row,
        big_m,
        budget: if switching { budget } else { None },
        warnings,
    })
}

/// The four McCormick rows for `w = c·φ` over `c ∈ [c_lo, c_hi]`,
/// `φ ∈ [θ_lo, θ_hi]`.
#[allow(clippy::too_many_arguments)]
fn add_mce_rows(
    program: &mut ConicProgram,
    k: usize,
    w: VarRef,
    c: VarRef,
    phi: &[(VarRef, f64)],
    b: &MceBounds,
    th_lo: f64,
    th_hi: f64,
) -> Vec<ConstraintRef> {
    let row = |cc: f64, th: f64| {
        // w − cc·φ − th·c  vs  −cc·th
        let mut terms = vec![(w, 1.0), (c, -th)];
        terms.extend(phi.iter().map(|&(v, coef)| (v, -cc * coef)));
        (terms, -cc * th)
    };
    let specs = [
        (b.c_lo, th_lo, Sense::Ge),
        (b.c_hi, th_hi, Sense::Ge),
        (b.c_hi, th_lo, Sense::Le),
        (b.c_lo, th_hi, Sense::Le),
    ];
    specs
        .iter()
        .enumerate()
        .map(|(j, &(cc, th, sense))| {
            let (terms, rhs) = row(cc, th);
            program.add_linear(format!("mce{}[{k}]", j + 1), terms, sense, rhs)
        })
        .collect()
}

/// Maps a solved program back to network quantities.
pub fn extract_dispatch(handle: &ModelHandle, solution: &ConicSolution) -> Result<DispatchSolution, Error> {
    if !solution.is_optimal() {
        return Err(Error::NotSolved(format!("solution status is {:?}", solution.status)));
    }
    if solution.primal.len() < handle.program.num_vars() {
        return Err(Error::DimensionMismatch(format!(
            "solution has {} values for {} variables",
            solution.primal.len(),
            handle.program.num_vars()
        )));
    }
    let val = |v: VarRef| solution.value(v);
    let pg: Vec<f64> = handle.pg.iter().map(|&v| val(v)).collect();
    let qg: Vec<f64> = handle.qg.iter().map(|v| v.map_or(0.0, val)).collect();
    let e: Vec<f64> = handle.e.iter().map(|v| v.map_or(1.0, val)).collect();
    let theta = handle
        .theta
        .iter()
        .map(|v| v.map(val))
        .collect::<Option<Vec<f64>>>();
    let mut flows = Vec::with_capacity(handle.lines.len());
    let mut open = Vec::with_capacity(handle.lines.len());
    let mut switched_open = Vec::new();
    for (k, line) in handle.lines.iter().enumerate() {
        let Some(line) = line else {
            flows.push(LineFlow {
                p_from: 0.0,
                q_from: 0.0,
                p_to: 0.0,
                q_to: 0.0,
            });
            open.push(true);
            continue;
        };
        let is_open = line.switch.is_some_and(|a| val(a) < 0.5);
        if is_open {
            switched_open.push(k);
        }
        open.push(is_open);
        let flow = match (line.p, line.q, line.flow) {
            (Some(p), Some(q), _) => LineFlow {
                p_from: val(p[0]),
                q_from: val(q[0]),
                p_to: val(p[1]),
                q_to: val(q[1]),
            },
            (_, _, Some(f)) => LineFlow {
                p_from: val(f),
                q_from: 0.0,
                p_to: -val(f),
                q_to: 0.0,
            },
            _ => {
                let th = theta.as_ref().expect("DC models carry angles");
                let f = line.dc_b * (th[line.from] - th[line.to] - line.dc_shift);
                LineFlow {
                    p_from: f,
                    q_from: 0.0,
                    p_to: -f,
                    q_to: 0.0,
                }
            }
        };
        flows.push(flow);
    }
    Ok(DispatchSolution {
        formulation: handle.kind,
        objective: solution.objective,
        pg,
        qg,
        e,
        theta,
        flows,
        open,
        switched_open,
    })
}

/// `e_f·e_t − (c² + s²)` per in-service line of an SOCP model; the relaxation
/// is exact on a line when this is zero.
pub fn voltage_cone_gaps(handle: &ModelHandle, solution: &ConicSolution) -> Vec<Option<f64>> {
    handle
        .lines
        .iter()
        .map(|line| {
            let line = line.as_ref()?;
            let (c, s) = (line.c?, line.s?);
            let ef = solution.value(handle.e[line.from]?);
            let et = solution.value(handle.e[line.to]?);
            let (c, s) = (solution.value(c), solution.value(s));
            Some(ef * et - (c * c + s * s))
        })
        .collect()
}

/// Copy of the model with variable start values taken from `hint`. Values
/// the hint does not carry default to a flat profile (`e = c = 1`, `s = 0`).
pub fn warm_start(handle: &ModelHandle, hint: &DispatchSolution) -> Result<ModelHandle, Error> {
    let n = handle.num_buses();
    if hint.pg.len() != handle.pg.len() || hint.e.len() != n || hint.open.len() != handle.lines.len() {
        return Err(Error::DimensionMismatch(format!(
            "hint has {} generators, {} buses, {} branches; model has {}, {}, {}",
            hint.pg.len(),
            hint.e.len(),
            hint.open.len(),
            handle.pg.len(),
            n,
            handle.lines.len()
        )));
    }
    let mut out = handle.clone();
    let p = &mut out.program;
    for (&v, &x) in handle.pg.iter().zip(&hint.pg) {
        p.set_start(v, x);
    }
    for (v, &x) in handle.qg.iter().zip(&hint.qg) {
        if let Some(v) = *v {
            p.set_start(v, x);
        }
    }
    for (v, &x) in handle.e.iter().zip(&hint.e) {
        if let Some(v) = *v {
            p.set_start(v, x);
        }
    }
    if let Some(th) = &hint.theta {
        for (v, &x) in handle.theta.iter().zip(th) {
            if let Some(v) = *v {
                p.set_start(v, x);
            }
        }
    }
    for (line, (flow, &is_open)) in handle.lines.iter().zip(hint.flows.iter().zip(&hint.open)) {
        let Some(line) = line else { continue };
        if let Some(a) = line.switch {
            p.set_start(a, if is_open { 0.0 } else { 1.0 });
        }
        let (c0, s0) = match &hint.theta {
            Some(th) => {
                let d = th[line.from] - th[line.to];
                let mag = (hint.e[line.from] * hint.e[line.to]).sqrt();
                (mag * d.cos(), mag * d.sin())
            }
            None => (1.0, 0.0),
        };
        if let Some(c) = line.c {
            p.set_start(c, c0);
        }
        if let Some(s) = line.s {
            p.set_start(s, s0);
        }
        if let Some(w) = line.w {
            p.set_start(w, s0);
        }
        if let Some(pv) = line.p {
            p.set_start(pv[0], flow.p_from);
            p.set_start(pv[1], flow.p_to);
        }
        if let Some(qv) = line.q {
            p.set_start(qv[0], flow.q_from);
            p.set_start(qv[1], flow.q_to);
        }
        if let Some(f) = line.flow {
            p.set_start(f, flow.p_from);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub solve: SolveOptions,
    pub mibb: MibbOptions,
    /// After an SOCP solve, search the optimal face for a point with tight
    /// voltage cones (see [`tighten_cones`]).
    pub tighten: bool,
    /// Sweeps of [`switching_local_search`] run before branch and bound on
    /// switching models; 0 disables it.
    pub local_search_sweeps: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            solve: SolveOptions::default(),
            mibb: MibbOptions::default(),
            tighten: true,
            local_search_sweeps: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Optimal,
    /// Mixed-integer search finished with unresolved nodes.
    FeasibleGap,
    /// A limit stopped the search; an incumbent may still exist.
    TimeLimit,
    NodeLimit,
    Infeasible,
    Unbounded,
    NumericalError,
}

impl RunStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, RunStatus::Optimal | RunStatus::FeasibleGap | RunStatus::TimeLimit | RunStatus::NodeLimit)
    }
}

#[derive(Debug, Clone)]
pub struct ModelSolution {
    pub status: RunStatus,
    /// Solve that prices the dispatch: the continuous optimum, or the
    /// fixed-binary restriction at the incumbent. Its duals are the prices.
    pub solution: Option<ConicSolution>,
    /// Primal point on the same optimal face with tightened cones, when
    /// tightening ran and succeeded.
    pub tightened: Option<ConicSolution>,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub runtime: f64,
    pub mibb: Option<MibbResult>,
}

impl ModelSolution {
    pub fn objective(&self) -> f64 {
        self.solution.as_ref().map_or(f64::NAN, |s| s.objective)
    }

    /// The solution whose primal values describe the dispatch.
    pub fn primal(&self) -> Option<&ConicSolution> {
        self.tightened.as_ref().or(self.solution.as_ref())
    }

    pub fn dispatch(&self, handle: &ModelHandle) -> Result<DispatchSolution, Error> {
        let sol = self
            .primal()
            .ok_or_else(|| Error::NotSolved(format!("run ended with status {:?}", self.status)))?;
        let mut d = extract_dispatch(handle, sol)?;
        d.objective = self.objective();
        Ok(d)
    }
}

fn run_status(status: SolveStatus) -> RunStatus {
    match status {
        SolveStatus::Optimal => RunStatus::Optimal,
        SolveStatus::Infeasible => RunStatus::Infeasible,
        SolveStatus::Unbounded => RunStatus::Unbounded,
        SolveStatus::TimeLimit => RunStatus::TimeLimit,
        SolveStatus::NumericalError => RunStatus::NumericalError,
    }
}

/// Solves a model: continuous formulations directly, switching formulations
/// by branch and bound with prices taken from the fixed-binary restriction.
pub fn solve_model(handle: &ModelHandle, config: &SolveConfig) -> Result<ModelSolution, Error> {
    let started = Instant::now();
    let binaries = handle.program.binaries();
    let (status, solution, priced_program, best_bound, gap, nodes, mibb) = if binaries.is_empty() {
        let sol = solve_continuous(&handle.program, &config.solve)?;
        let status = run_status(sol.status);
        let bound = if sol.is_optimal() { sol.objective } else { f64::NAN };
        (status, sol.is_optimal().then_some(sol), handle.program.clone(), bound, 0.0, 1, None)
    } else {
        let mut opts = config.mibb.clone();
        opts.solve = config.solve.clone();
        if opts.initial_incumbent.is_none() {
            // Keeping every line closed is always admissible.
            opts.initial_incumbent = Some(vec![1.0; binaries.len()]);
        }
        if config.local_search_sweeps > 0 {
            // Half of any time limit goes to the heuristic.
            let deadline = opts.time_limit.map(|t| started + t / 2);
            let start = opts.initial_incumbent.clone().unwrap_or_default();
            if let Some(improved) =
                switching_local_search(handle, &start, config.local_search_sweeps, deadline, &config.solve)
            {
                opts.initial_incumbent = Some(improved);
            }
            opts.time_limit = opts.time_limit.map(|t| t.saturating_sub(started.elapsed()));
        }
        let res = solve_misocp(&handle.program, &opts)?;
        let status = match res.status {
            MibbStatus::Optimal => RunStatus::Optimal,
            MibbStatus::FeasibleGap => RunStatus::FeasibleGap,
            MibbStatus::Infeasible => RunStatus::Infeasible,
            MibbStatus::NodeLimit => RunStatus::NodeLimit,
            MibbStatus::TimeLimit => RunStatus::TimeLimit,
        };
        let fixed = match res.incumbent {
            Some(_) => fix_binaries(&handle.program, &res.assignment)?,
            None => handle.program.clone(),
        };
        (status, res.incumbent.clone(), fixed, res.best_bound, res.gap, res.nodes_explored, Some(res))
    };
    let tightened = match (&solution, config.tighten && !handle.kind.is_dc()) {
        (Some(sol), true) => tighten_cones(handle, &priced_program, sol, &config.solve),
        _ => None,
    };
    Ok(ModelSolution {
        status,
        solution,
        tightened,
        best_bound,
        gap,
        nodes,
        runtime: started.elapsed().as_secs_f64(),
        mibb,
    })
}

fn topology_connected(handle: &ModelHandle, open: &[bool]) -> bool {
    let n = handle.e.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut components = n;
    for (k, line) in handle.lines.iter().enumerate() {
        let Some(line) = line else { continue };
        if open[k] {
            continue;
        }
        let (a, b) = (root(&mut parent, line.from), root(&mut parent, line.to));
        if a != b {
            parent[a] = b;
            components -= 1;
        }
    }
    components <= 1
}

/// First-improvement descent over single line openings, starting from the
/// integral assignment `start` (in [`ConicProgram::binaries`] order). Each
/// candidate is the continuous restriction at a fixed topology; openings
/// that would island a bus or exceed the budget are skipped. Stops after
/// `sweeps` passes, a pass without improvement, or at `deadline`. Returns the
/// best assignment found when it beats `start`.
pub fn switching_local_search(
    handle: &ModelHandle,
    start: &[f64],
    sweeps: usize,
    deadline: Option<Instant>,
    options: &SolveOptions,
) -> Option<Vec<f64>> {
    let binaries = handle.program.binaries();
    if binaries.len() != start.len() || binaries.is_empty() {
        return None;
    }
    let line_of: Vec<usize> = binaries
        .iter()
        .map(|v| handle.switches().into_iter().find(|(_, s)| s == v).map(|(k, _)| k))
        .collect::<Option<_>>()?;
    let evaluate = |a: &[f64]| -> Option<f64> {
        let sol = solve_continuous(&fix_binaries(&handle.program, a).ok()?, options).ok()?;
        sol.is_optimal().then_some(sol.objective)
    };
    let mut current: Vec<f64> = start.iter().map(|&a| if a > 0.5 { 1.0 } else { 0.0 }).collect();
    let mut best = evaluate(&current)?;
    let initial = best;
    let timed_out = || deadline.is_some_and(|d| Instant::now() >= d);
    'sweeps: for _ in 0..sweeps {
        let mut improved = false;
        for j in 0..current.len() {
            if timed_out() {
                break 'sweeps;
            }
            let opened = current.iter().filter(|&&a| a < 0.5).count();
            if current[j] < 0.5 || handle.budget.is_some_and(|b| opened >= b) {
                continue;
            }
            let mut open = vec![false; handle.lines.len()];
            for (i, &a) in current.iter().enumerate() {
                open[line_of[i]] = a < 0.5;
            }
            open[line_of[j]] = true;
            if !topology_connected(handle, &open) {
                continue;
            }
            current[j] = 0.0;
            match evaluate(&current) {
                Some(obj) if obj < best - 1e-6 * best.abs().max(1.0) => {
                    best = obj;
                    improved = true;
                }
                _ => current[j] = 1.0,
            }
        }
        if !improved {
            break;
        }
    }
    (best < initial).then_some(current)
}

/// Re-solves `program` over `objective ≤ (1 + 1e-8)·optimum` minimising
/// `Σ ((e_f + e_t)/2 − c)` over lines, which is zero exactly when every
/// voltage cone is tight with `e_f = e_t`. The interior-point optimum lies in
/// the relative interior of the optimal face, where cones on lines that do
/// not affect cost are usually slack; this picks a boundary point instead.
/// Returns `None` when the secondary solve fails.
pub fn tighten_cones(
    handle: &ModelHandle,
    program: &ConicProgram,
    solution: &ConicSolution,
    options: &SolveOptions,
) -> Option<ConicSolution> {
    let slack = 1e-8 * solution.objective.abs().max(1.0);
    let mut face = objective_level_set(program, solution.objective + slack).ok()?;
    for line in handle.lines.iter().flatten() {
        let (Some(c), Some(ef), Some(et)) = (line.c, handle.e[line.from], handle.e[line.to]) else {
            continue;
        };
        face.add_objective_linear(c, -1.0);
        face.add_objective_linear(ef, 0.5);
        face.add_objective_linear(et, 0.5);
    }
    let sol = solve_continuous(&face, options).ok()?;
    if !sol.is_optimal() {
        log::debug!("cone tightening ended with {:?}", sol.status);
        return None;
    }
    let n = program.num_vars();
    let primal = sol.primal[..n].to_vec();
    // The second solve is only a refinement; keep it only if it is as
    // feasible and as cheap as the point it replaces.
    let objective = program.eval_objective(&primal);
    let base = program.max_violation(&solution.primal[..n]);
    let viol = program.max_violation(&primal);
    if viol > (10.0 * base).max(1e-6) || (objective - solution.objective).abs() > 10.0 * slack {
        log::debug!("cone tightening rejected: violation {viol:.2e} (was {base:.2e}), objective {objective} vs {}", solution.objective);
        return None;
    }
    Some(ConicSolution {
        objective,
        primal,
        duals: Vec::new(),
        cone_duals: Vec::new(),
        ..sol
    })
}

/// Builds the model of `kind`. `budget` and `big_m` only affect switching
/// formulations.
pub fn build(network: &Network, kind: FormulationKind, budget: Option<usize>, big_m: f64) -> Result<ModelHandle, Error> {
    match kind {
        FormulationKind::DcOpf => build_dc_opf(network),
        FormulationKind::DcOts => build_dc_ots_with_big_m(network, budget, big_m),
        FormulationKind::SocpAcOpf => build_socp_acopf(network, false),
        FormulationKind::SocpAcOpfMce => build_socp_acopf(network, true),
        FormulationKind::OtsMisocpMce => build_ots_misocp(network, budget, big_m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::fixtures::*;
    use crate::netmodel::BusKind;

    fn solve(h: &ModelHandle) -> ConicSolution {
        solve_continuous(&h.program, &SolveOptions::default()).unwrap()
    }

    fn one_bus() -> Network {
        Network {
            base_mva: 100.0,
            buses: vec![bus(1, BusKind::Slack, 0.5)],
            branches: vec![],
            generators: vec![gen(1, 2.0, 10.0)],
        }
    }

    pub(crate) fn two_bus_congested() -> Network {
        let mut line = line(1, 2, 0.0, 0.1, 0.0);
        line.rate = 0.4;
        Network {
            base_mva: 100.0,
            buses: vec![bus(1, BusKind::Slack, 0.0), bus(2, BusKind::Pv, 1.0)],
            branches: vec![line],
            generators: vec![gen(1, 2.0, 10.0), gen(2, 2.0, 30.0)],
        }
    }

    #[test]
    fn one_bus_dc() {
        let h = build_dc_opf(&one_bus()).unwrap();
        let sol = solve(&h);
        let d = extract_dispatch(&h, &sol).unwrap();
        assert!((d.pg[0] - 0.5).abs() < 1e-7);
        assert!((sol.objective - 500.0).abs() < 1e-5);
    }

    #[test]
    fn one_bus_socp_matches_dc() {
        let h = build_socp_acopf(&one_bus(), true).unwrap();
        let sol = solve(&h);
        assert!((sol.objective - 500.0).abs() < 1e-5);
    }

    #[test]
    fn congested_two_bus_dispatch() {
        let h = build_dc_opf(&two_bus_congested()).unwrap();
        let d = extract_dispatch(&h, &solve(&h)).unwrap();
        assert!((d.pg[0] - 0.4).abs() < 1e-6);
        assert!((d.pg[1] - 0.6).abs() < 1e-6);
        assert!((d.flows[0].p_from + d.flows[0].p_to).abs() < 1e-9);
    }

    #[test]
    fn missing_slack_rejected() {
        let mut net = one_bus();
        net.buses[0].kind = BusKind::Pq;
        assert!(matches!(build_dc_opf(&net), Err(Error::NoSlack)));
        assert!(matches!(build_socp_acopf(&net, false), Err(Error::NoSlack)));
    }

    #[test]
    fn mce_bound_examples() {
        let b = mce_bounds(0.9, 1.1, -1.047, 1.047).unwrap();
        assert!((b.c_lo - 0.81 * 1.047f64.cos()).abs() < 1e-12);
        assert!((b.c_lo - 0.4052).abs() < 1e-3);
        assert!((b.c_hi - 1.21).abs() < 1e-12);
        let z = mce_bounds(0.9, 1.1, 0.0, 0.0).unwrap();
        assert_eq!((z.s_lo, z.s_hi), (0.0, 0.0));
        assert!((z.c_lo - 0.81).abs() < 1e-12);
        let q = mce_bounds(1.0, 1.0, -FRAC_PI_2, FRAC_PI_2).unwrap();
        assert!(q.c_lo.abs() < 1e-12);
        assert!((q.s_lo + 1.0).abs() < 1e-12 && (q.s_hi - 1.0).abs() < 1e-12);
        assert!(mce_bounds(1.2, 1.1, -0.1, 0.1).is_err());
        assert!(mce_bounds(0.9, 1.1, 0.1, 0.2).is_err());
    }

    #[test]
    fn mce_rows_exact_at_corners() {
        let mut net = two_bus_congested();
        net.branches[0].rate = 0.0;
        let h = build_socp_acopf(&net, true).unwrap();
        let line = h.lines[0].as_ref().unwrap();
        let b = mce_bounds(0.9, 1.1, -std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_3).unwrap();
        let (tf, tt) = (h.theta[0].unwrap(), h.theta[1].unwrap());
        for cc in [b.c_lo, b.c_hi] {
            for th in [-std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_3] {
                let mut x = vec![0.0; h.program.num_vars()];
                x[line.c.unwrap().index()] = cc;
                x[tf.index()] = th;
                x[tt.index()] = 0.0;
                // Tightest admissible w from the four rows.
                let mut lo = f64::NEG_INFINITY;
                let mut hi = f64::INFINITY;
                for &r in &line.mce_rows {
                    let row = h.program.linear(r);
                    let wcoef = row.terms.iter().find(|t| t.0 == line.w.unwrap()).unwrap().1;
                    let rest: f64 = row.terms.iter().filter(|t| t.0 != line.w.unwrap()).map(|&(v, c)| c * x[v.index()]).sum();
                    let bound = (row.rhs - rest) / wcoef;
                    match row.sense {
                        Sense::Ge => lo = lo.max(bound),
                        Sense::Le => hi = hi.min(bound),
                        Sense::Eq => unreachable!(),
                    }
                }
                assert!((lo - cc * th).abs() < 1e-12 && (hi - cc * th).abs() < 1e-12, "corner ({cc}, {th})");
            }
        }
    }

    #[test]
    fn ots_budget_zero_matches_nominal_dc() {
        let net = two_bus_congested();
        let opf = solve(&build_dc_opf(&net).unwrap()).objective;
        let h = build_dc_ots(&net, Some(0)).unwrap();
        let res = crate::mibb::solve_misocp(&h.program, &Default::default()).unwrap();
        assert!((res.objective() - opf).abs() < 1e-6 * opf);
    }

    #[test]
    fn non_switchable_lines_have_no_binary() {
        let mut net = two_bus_congested();
        net.branches[0].switchable = false;
        let h = build_ots_misocp(&net, None, DEFAULT_BIG_M).unwrap();
        assert!(h.switches().is_empty());
        assert!(h.program.binaries().is_empty());
    }

    #[test]
    fn extract_requires_solution() {
        let h = build_dc_opf(&one_bus()).unwrap();
        let failed = ConicSolution::failed(crate::conic::SolveStatus::Infeasible, 0.0);
        assert!(matches!(extract_dispatch(&h, &failed), Err(Error::NotSolved(_))));
    }

    #[test]
    fn warm_start_fixed_point_and_mismatch() {
        let net = two_bus_congested();
        let h = build_socp_acopf(&net, true).unwrap();
        let d = extract_dispatch(&h, &solve(&h)).unwrap();
        let once = warm_start(&h, &d).unwrap();
        let twice = warm_start(&once, &d).unwrap();
        assert_eq!(once, twice);
        let bigger = build_socp_acopf(&one_bus(), true).unwrap();
        let d1 = extract_dispatch(&bigger, &solve(&bigger)).unwrap();
        assert!(matches!(warm_start(&h, &d1), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn formulation_names_round_trip() {
        for k in FormulationKind::ALL {
            assert_eq!(k.name().parse::<FormulationKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!("ac".parse::<FormulationKind>().is_err());
    }
}
