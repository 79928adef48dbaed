use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::{ConicBackend, ConicError, ConicProgram, ConicSolution, Sense, SolveOptions, SolveStatus};

/// Interior-point backend built on Clarabel.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

/// Row kinds recorded while assembling `Ax + s = b`, used to map `z` back.
#[derive(Debug, Clone, Copy)]
enum RowOrigin {
    Linear { index: usize, flip: bool },
    Bound,
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    fn new() -> Self {
        Triplets {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    fn push(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(v);
        }
    }

    /// Column-compressed matrix with duplicate entries summed.
    fn into_csc(self, m: usize, n: usize) -> CscMatrix<f64> {
        let mut entries: Vec<(usize, usize, f64)> = self
            .cols
            .into_iter()
            .zip(self.rows)
            .zip(self.vals)
            .map(|((c, r), v)| (c, r, v))
            .collect();
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut colptr = vec![0usize; n + 1];
        let mut rowval = Vec::with_capacity(entries.len());
        let mut nzval: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (c, r, v) in entries {
            if last == Some((c, r)) {
                *nzval.last_mut().expect("entry exists") += v;
                continue;
            }
            last = Some((c, r));
            colptr[c + 1] += 1;
            rowval.push(r);
            nzval.push(v);
        }
        for c in 0..n {
            colptr[c + 1] += colptr[c];
        }
        CscMatrix::new(m, n, colptr, rowval, nzval)
    }
}

fn map_status(status: SolverStatus) -> SolveStatus {
    match status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        SolverStatus::MaxTime => SolveStatus::TimeLimit,
        _ => SolveStatus::NumericalError,
    }
}

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, program: &ConicProgram, options: &SolveOptions) -> Result<ConicSolution, ConicError> {
        program.validate()?;
        let started = Instant::now();
        let n = program.num_vars();
        let mut a = Triplets::new();
        let mut b: Vec<f64> = Vec::new();
        let mut origin: Vec<RowOrigin> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        // Zero cone: equality rows and fixed variables.
        let mut zero = 0;
        for (k, row) in program.linear_constraints().iter().enumerate() {
            if row.sense == Sense::Eq {
                for &(v, c) in &row.terms {
                    a.push(b.len(), v.index(), c);
                }
                b.push(row.rhs);
                origin.push(RowOrigin::Linear { index: k, flip: false });
                zero += 1;
            }
        }
        for (j, var) in program.vars().iter().enumerate() {
            if var.lower == var.upper {
                a.push(b.len(), j, 1.0);
                b.push(var.lower);
                origin.push(RowOrigin::Bound);
                zero += 1;
            }
        }
        if zero > 0 {
            cones.push(SupportedConeT::ZeroConeT(zero));
        }

        // Nonnegative cone: inequalities and finite bounds.
        let mut nonneg = 0;
        for (k, row) in program.linear_constraints().iter().enumerate() {
            let flip = match row.sense {
                Sense::Le => false,
                Sense::Ge => true,
                Sense::Eq => continue,
            };
            let sign = if flip { -1.0 } else { 1.0 };
            for &(v, c) in &row.terms {
                a.push(b.len(), v.index(), sign * c);
            }
            b.push(sign * row.rhs);
            origin.push(RowOrigin::Linear { index: k, flip });
            nonneg += 1;
        }
        for (j, var) in program.vars().iter().enumerate() {
            if var.lower == var.upper {
                continue;
            }
            if var.upper.is_finite() {
                a.push(b.len(), j, 1.0);
                b.push(var.upper);
                origin.push(RowOrigin::Bound);
                nonneg += 1;
            }
            if var.lower.is_finite() {
                a.push(b.len(), j, -1.0);
                b.push(-var.lower);
                origin.push(RowOrigin::Bound);
                nonneg += 1;
            }
        }
        if nonneg > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(nonneg));
        }

        // Second-order cones: s = b - Ax = (head, body...).
        let cone_start = b.len();
        for cone in program.cones() {
            for expr in std::iter::once(&cone.head).chain(&cone.body) {
                for &(v, c) in &expr.terms {
                    a.push(b.len(), v.index(), -c);
                }
                b.push(expr.constant);
                origin.push(RowOrigin::Bound);
            }
            cones.push(SupportedConeT::SecondOrderConeT(1 + cone.body.len()));
        }

        let m = b.len();
        let a_mat = a.into_csc(m, n);
        let mut p = Triplets::new();
        for &(v, q) in &program.objective().quadratic {
            p.push(v.index(), v.index(), q);
        }
        let p_mat = p.into_csc(n, n);
        let mut q = vec![0.0; n];
        for &(v, c) in &program.objective().linear {
            q[v.index()] += c;
        }

        let mut builder = DefaultSettingsBuilder::default();
        builder
            .verbose(options.verbose)
            .max_iter(options.max_iter)
            .tol_feas(options.feas_tol)
            .tol_gap_abs(options.gap_tol)
            .tol_gap_rel(options.gap_tol);
        if let Some(limit) = options.time_limit {
            builder.time_limit(limit.as_secs_f64().max(1e-3));
        }
        let settings = builder.build().map_err(|e| ConicError::Backend(format!("{e:?}")))?;
        let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &b, &cones, settings)
            .map_err(|e| ConicError::Backend(format!("{e:?}")))?;
        solver.solve();
        let elapsed = started.elapsed().as_secs_f64();
        let sol = &solver.solution;
        let status = map_status(sol.status);
        if status != SolveStatus::Optimal {
            return Ok(ConicSolution::failed(status, elapsed));
        }

        let mut duals = vec![0.0; program.num_linear()];
        for (row, o) in origin.iter().enumerate().take(cone_start) {
            if let RowOrigin::Linear { index, flip } = *o {
                let z = sol.z[row];
                duals[index] = match program.linear_constraints()[index].sense {
                    Sense::Eq => -z,
                    _ => {
                        debug_assert!(flip == (program.linear_constraints()[index].sense == Sense::Ge));
                        z
                    }
                };
            }
        }
        let mut cone_duals = Vec::with_capacity(program.num_cones());
        let mut at = cone_start;
        for cone in program.cones() {
            let len = 1 + cone.body.len();
            cone_duals.push(sol.z[at..at + len].to_vec());
            at += len;
        }

        Ok(ConicSolution {
            status,
            objective: program.eval_objective(&sol.x),
            primal: sol.x.clone(),
            duals,
            cone_duals,
            solve_time: elapsed,
            iterations: sol.iterations,
        })
    }
}
