//! Dense two-phase tableau simplex for small LPs.
//!
//! Slow and exact enough for tests: it exists as an independent route to
//! primal and dual values of linear programs, sharing nothing with the
//! interior-point backend beyond the program representation.

use std::time::Instant;

use super::{ConicBackend, ConicError, ConicProgram, ConicSolution, Sense, SolveOptions, SolveStatus};

const PIVOT_TOL: f64 = 1e-10;
const MAX_PIVOTS: usize = 100_000;

/// Dense simplex backend restricted to linear programs.
#[derive(Debug, Clone, Copy, Default)]
pub struct DenseSimplex;

/// How an original variable is expressed through nonnegative columns.
#[derive(Debug, Clone, Copy)]
enum Column {
    /// `x = offset + y`
    Shifted { col: usize, offset: f64 },
    /// `x = offset - y`
    Mirrored { col: usize, offset: f64 },
    /// `x = y⁺ - y⁻`
    Free { pos: usize, neg: usize },
}

struct Tableau {
    /// `m` rows of `width + 1` entries; the last entry is the rhs.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn pivot(&mut self, p: usize, q: usize) {
        let w = self.width;
        let piv = self.rows[p][q];
        for v in &mut self.rows[p] {
            *v /= piv;
        }
        let pivot_row = self.rows[p].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == p {
                continue;
            }
            let f = row[q];
            if f != 0.0 {
                for j in 0..=w {
                    row[j] -= f * pivot_row[j];
                }
            }
        }
        self.basis[p] = q;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut r = cost.to_vec();
        for (i, row) in self.rows.iter().enumerate() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..self.width {
                    r[j] -= cb * row[j];
                }
            }
        }
        r
    }

    /// Bland's rule iterations over columns `j` with `allowed[j]`.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool], pivots: &mut usize) -> Outcome {
        loop {
            if *pivots >= MAX_PIVOTS {
                return Outcome::IterationLimit;
            }
            let r = self.reduced_costs(cost);
            let Some(q) = (0..self.width).find(|&j| allowed[j] && r[j] < -1e-9) else {
                return Outcome::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[q] > PIVOT_TOL {
                    let ratio = row[self.width] / row[q];
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((best, best_ratio)) => {
                            if ratio < best_ratio - 1e-12
                                || (ratio <= best_ratio + 1e-12 && self.basis[i] < self.basis[best])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((p, _)) = leave else {
                return Outcome::Unbounded;
            };
            self.pivot(p, q);
            *pivots += 1;
        }
    }
}

impl ConicBackend for DenseSimplex {
    fn name(&self) -> &'static str {
        "dense-simplex"
    }

    fn solve(&self, program: &ConicProgram, _options: &SolveOptions) -> Result<ConicSolution, ConicError> {
        program.validate()?;
        if program.num_cones() > 0 || !program.objective().quadratic.is_empty() {
            return Err(ConicError::Unsupported("dense simplex solves linear programs only".into()));
        }
        let started = Instant::now();

        // Nonnegative structural columns.
        let mut ncols = 0;
        let mut map = Vec::with_capacity(program.num_vars());
        let mut upper_rows: Vec<(usize, f64)> = Vec::new();
        for var in program.vars() {
            let col = if var.lower.is_finite() {
                let c = Column::Shifted {
                    col: ncols,
                    offset: var.lower,
                };
                if var.upper.is_finite() {
                    upper_rows.push((ncols, var.upper - var.lower));
                }
                ncols += 1;
                c
            } else if var.upper.is_finite() {
                ncols += 1;
                Column::Mirrored {
                    col: ncols - 1,
                    offset: var.upper,
                }
            } else {
                ncols += 2;
                Column::Free {
                    pos: ncols - 2,
                    neg: ncols - 1,
                }
            };
            map.push(col);
        }

        // Rows as (coefficients over structural columns, sense, rhs).
        let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
        for lin in program.linear_constraints() {
            let mut coef = vec![0.0; ncols];
            let mut rhs = lin.rhs;
            for &(v, a) in &lin.terms {
                match map[v.index()] {
                    Column::Shifted { col, offset } => {
                        coef[col] += a;
                        rhs -= a * offset;
                    }
                    Column::Mirrored { col, offset } => {
                        coef[col] -= a;
                        rhs -= a * offset;
                    }
                    Column::Free { pos, neg } => {
                        coef[pos] += a;
                        coef[neg] -= a;
                    }
                }
            }
            rows.push((coef, lin.sense, rhs));
        }
        for &(col, width) in &upper_rows {
            let mut coef = vec![0.0; ncols];
            coef[col] = 1.0;
            rows.push((coef, Sense::Le, width));
        }

        let m = rows.len();
        let nslack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
        let width = ncols + nslack + m;
        let art0 = ncols + nslack;
        let mut tab = Tableau {
            rows: Vec::with_capacity(m),
            basis: (art0..art0 + m).collect(),
            width,
        };
        let mut sign = vec![1.0; m];
        let mut slack_at = ncols;
        for (i, (coef, sense, rhs)) in rows.iter().enumerate() {
            let mut row = vec![0.0; width + 1];
            row[..ncols].copy_from_slice(coef);
            match sense {
                Sense::Le => {
                    row[slack_at] = 1.0;
                    slack_at += 1;
                }
                Sense::Ge => {
                    row[slack_at] = -1.0;
                    slack_at += 1;
                }
                Sense::Eq => {}
            }
            row[width] = *rhs;
            if *rhs < 0.0 {
                sign[i] = -1.0;
                for v in &mut row[..=width] {
                    *v = -*v;
                }
            }
            row[art0 + i] = 1.0;
            tab.rows.push(row);
        }

        let mut pivots = 0;
        let mut phase1 = vec![0.0; width];
        for c in &mut phase1[art0..] {
            *c = 1.0;
        }
        let everything = vec![true; width];
        if let Outcome::IterationLimit = tab.optimize(&phase1, &everything, &mut pivots) {
            return Ok(ConicSolution::failed(SolveStatus::NumericalError, started.elapsed().as_secs_f64()));
        }
        let infeas: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= art0)
            .map(|i| tab.rows[i][width])
            .sum();
        if infeas > 1e-8 {
            return Ok(ConicSolution::failed(SolveStatus::Infeasible, started.elapsed().as_secs_f64()));
        }
        for i in 0..m {
            if tab.basis[i] >= art0 {
                if let Some(q) = (0..art0).find(|&j| tab.rows[i][j].abs() > 1e-9) {
                    tab.pivot(i, q);
                }
            }
        }

        let mut phase2 = vec![0.0; width];
        let mut constant = program.objective().constant;
        for &(v, c) in &program.objective().linear {
            match map[v.index()] {
                Column::Shifted { col, offset } => {
                    phase2[col] += c;
                    constant += c * offset;
                }
                Column::Mirrored { col, offset } => {
                    phase2[col] -= c;
                    constant += c * offset;
                }
                Column::Free { pos, neg } => {
                    phase2[pos] += c;
                    phase2[neg] -= c;
                }
            }
        }
        let mut structural = vec![true; width];
        for flag in &mut structural[art0..] {
            *flag = false;
        }
        match tab.optimize(&phase2, &structural, &mut pivots) {
            Outcome::Optimal => {}
            Outcome::Unbounded => {
                return Ok(ConicSolution::failed(SolveStatus::Unbounded, started.elapsed().as_secs_f64()));
            }
            Outcome::IterationLimit => {
                return Ok(ConicSolution::failed(SolveStatus::NumericalError, started.elapsed().as_secs_f64()));
            }
        }

        let mut y = vec![0.0; width];
        for (i, &b) in tab.basis.iter().enumerate() {
            y[b] = tab.rows[i][width];
        }
        let primal: Vec<f64> = map
            .iter()
            .map(|c| match *c {
                Column::Shifted { col, offset } => offset + y[col],
                Column::Mirrored { col, offset } => offset - y[col],
                Column::Free { pos, neg } => y[pos] - y[neg],
            })
            .collect();

        // Row prices: y_i = c_Bᵀ B⁻¹ e_i, read from the artificial columns.
        let mut duals = Vec::with_capacity(program.num_linear());
        for (i, lin) in program.linear_constraints().iter().enumerate() {
            let price: f64 = (0..m)
                .map(|k| phase2[tab.basis[k]] * tab.rows[k][art0 + i])
                .sum::<f64>()
                * sign[i];
            duals.push(match lin.sense {
                Sense::Eq | Sense::Ge => price,
                Sense::Le => -price,
            });
        }
        let objective = constant
            + (0..width)
                .map(|j| phase2[j] * y[j])
                .sum::<f64>();

        Ok(ConicSolution {
            status: SolveStatus::Optimal,
            primal,
            duals,
            cone_duals: Vec::new(),
            objective,
            solve_time: started.elapsed().as_secs_f64(),
            iterations: pivots as u32,
        })
    }
}
