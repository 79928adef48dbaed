//! AC feasibility checks: Newton–Raphson power flow in polar coordinates and
//! limit reports on the converged operating point.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::formulations::DispatchSolution;
use crate::netmodel::{build_admittance, connected_components, AdmittanceMatrix, BusKind, Network};
use crate::Error;

/// Generator dispatch and voltage targets fed to the power flow.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSetpoints {
    /// Active output per generator, pu. The slack bus output is recomputed.
    pub p: Vec<f64>,
    /// Voltage magnitude target per bus, used at PV and slack buses.
    pub v: Vec<f64>,
    /// Initial angles; flat start when `None`.
    pub angles: Option<Vec<f64>>,
}

impl GenSetpoints {
    /// Flat targets: `|V| = 1` everywhere.
    pub fn flat(network: &Network, p: Vec<f64>) -> Self {
        GenSetpoints {
            p,
            v: vec![1.0; network.buses.len()],
            angles: None,
        }
    }

    /// Targets recovered from an optimization dispatch: generator outputs and
    /// `|V| = √e`, warm-started from the model angles when it has them.
    pub fn from_dispatch(dispatch: &DispatchSolution) -> Self {
        GenSetpoints {
            p: dispatch.pg.clone(),
            v: dispatch.e.iter().map(|e| e.max(0.0).sqrt()).collect(),
            angles: dispatch.theta.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Convert PV buses to PQ at the violated reactive limit and re-solve.
    pub enforce_q_limits: bool,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tol: 1e-8,
            max_iter: 30,
            enforce_q_limits: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchFlow {
    pub s_from: Complex64,
    pub s_to: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowResult {
    pub converged: bool,
    /// Mismatch evaluations in the final Newton run (a flat solution that
    /// already balances counts as one).
    pub iterations: usize,
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    /// `None` for branches out of service or opened.
    pub branch_flows: Vec<Option<BranchFlow>>,
    pub mismatch_inf_norm: f64,
    /// Mismatch norm per evaluation of the final run.
    pub mismatch_history: Vec<f64>,
    pub gen_p: Vec<f64>,
    pub gen_q: Vec<f64>,
    /// Bus kinds at the end, after any PV→PQ conversions.
    pub bus_kinds: Vec<BusKind>,
    pub diagnostic: Option<String>,
}

impl PowerFlowResult {
    /// Complex power injected at every bus by the network solution.
    pub fn injections(&self, y: &AdmittanceMatrix) -> Vec<Complex64> {
        let v = phasors(&self.v_mag, &self.v_ang);
        injections(y, &v)
    }
}

fn phasors(mag: &[f64], ang: &[f64]) -> Vec<Complex64> {
    mag.iter().zip(ang).map(|(&m, &a)| Complex64::from_polar(m, a)).collect()
}

fn injections(y: &AdmittanceMatrix, v: &[Complex64]) -> Vec<Complex64> {
    (0..v.len())
        .map(|i| {
            let current: Complex64 = y.row(i).iter().map(|&(k, yik)| yik * v[k]).sum();
            v[i] * current.conj()
        })
        .collect()
}

/// Components of the in-service graph with `open` removed.
pub fn island_check(network: &Network, open: &[usize]) -> Vec<Vec<usize>> {
    connected_components(network, open)
}

/// External ids of buses not connected to the slack, or an empty list.
fn islanded_buses(network: &Network, open: &[usize], slack: usize) -> Vec<usize> {
    island_check(network, open)
        .into_iter()
        .filter(|comp| !comp.contains(&slack))
        .flatten()
        .map(|i| network.buses[i].id)
        .collect()
}

struct NewtonRun {
    converged: bool,
    singular: bool,
    history: Vec<f64>,
}

/// Polar Newton iterations on `v` in place.
fn newton(
    y: &AdmittanceMatrix,
    v: &mut [Complex64],
    spec: &[Complex64],
    pvpq: &[usize],
    pq: &[usize],
    tol: f64,
    max_iter: usize,
) -> NewtonRun {
    let n = v.len();
    let npv_pq = pvpq.len();
    let m = npv_pq + pq.len();
    let mut history = Vec::new();
    let mut pos_pq = vec![usize::MAX; n];
    for (k, &i) in pq.iter().enumerate() {
        pos_pq[i] = k;
    }
    let mut pos_ang = vec![usize::MAX; n];
    for (k, &i) in pvpq.iter().enumerate() {
        pos_ang[i] = k;
    }
    loop {
        let s = injections(y, v);
        let mut f = DVector::zeros(m);
        for (k, &i) in pvpq.iter().enumerate() {
            f[k] = (s[i] - spec[i]).re;
        }
        for (k, &i) in pq.iter().enumerate() {
            f[npv_pq + k] = (s[i] - spec[i]).im;
        }
        let norm = f.amax();
        history.push(norm);
        if norm <= tol {
            return NewtonRun {
                converged: true,
                singular: false,
                history,
            };
        }
        if history.len() > max_iter || !norm.is_finite() {
            return NewtonRun {
                converged: false,
                singular: false,
                history,
            };
        }

        // dS/dθ and dS/d|V| from the sparse admittance rows.
        let current: Vec<Complex64> = (0..n)
            .map(|i| y.row(i).iter().map(|&(k, yik)| yik * v[k]).sum())
            .collect();
        let mut jac = DMatrix::zeros(m, m);
        for &i in pvpq {
            let row_p = pos_ang[i];
            let row_q = if pos_pq[i] != usize::MAX { Some(npv_pq + pos_pq[i]) } else { None };
            for &(k, yik) in y.row(i) {
                let unit_k = v[k] / v[k].norm();
                let mut d_ang = -Complex64::i() * v[i] * (yik * v[k]).conj();
                let mut d_mag = v[i] * (yik * unit_k).conj();
                if k == i {
                    d_ang += Complex64::i() * v[i] * current[i].conj();
                    d_mag += current[i].conj() * unit_k;
                }
                let col_ang = pos_ang[k];
                let col_mag = if pos_pq[k] != usize::MAX { Some(npv_pq + pos_pq[k]) } else { None };
                if row_p != usize::MAX {
                    if col_ang != usize::MAX {
                        jac[(row_p, col_ang)] += d_ang.re;
                    }
                    if let Some(c) = col_mag {
                        jac[(row_p, c)] += d_mag.re;
                    }
                }
                if let Some(r) = row_q {
                    if col_ang != usize::MAX {
                        jac[(r, col_ang)] += d_ang.im;
                    }
                    if let Some(c) = col_mag {
                        jac[(r, c)] += d_mag.im;
                    }
                }
            }
        }
        let Some(dx) = jac.lu().solve(&(-f)) else {
            return NewtonRun {
                converged: false,
                singular: true,
                history,
            };
        };
        for (k, &i) in pvpq.iter().enumerate() {
            let (mag, ang) = v[i].to_polar();
            let mag_new = if pos_pq[i] != usize::MAX { mag + dx[npv_pq + pos_pq[i]] } else { mag };
            v[i] = Complex64::from_polar(mag_new, ang + dx[k]);
        }
    }
}

/// AC power flow with the branches in `open` removed.
///
/// The slack bus absorbs the imbalance. PV buses are those of kind `Pv`
/// with at least one generator; when `enforce_q_limits` is set, a PV bus
/// whose reactive output leaves its combined limits is fixed at the limit
/// and re-solved as PQ.
pub fn newton_power_flow(
    network: &Network,
    setpoints: &GenSetpoints,
    open: &[usize],
    options: &PowerFlowOptions,
) -> Result<PowerFlowResult, Error> {
    let n = network.buses.len();
    let ng = network.generators.len();
    if setpoints.p.len() != ng || setpoints.v.len() != n || setpoints.angles.as_ref().is_some_and(|a| a.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "setpoints for {} generators and {} buses; network has {ng} and {n}",
            setpoints.p.len(),
            setpoints.v.len()
        )));
    }
    let slack = network.slack_index()?;
    let island = islanded_buses(network, open, slack);
    if !island.is_empty() {
        return Err(Error::Islanded(island));
    }
    let net = network.with_open_branches(open);
    let idx = net.indexed()?;
    let y = build_admittance(&net)?;

    let mut kinds: Vec<BusKind> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| match b.kind {
            BusKind::Slack => BusKind::Slack,
            BusKind::Pv if !idx.gens_at[i].is_empty() => BusKind::Pv,
            _ => BusKind::Pq,
        })
        .collect();
    // Fixed reactive injection at buses converted from PV.
    let mut q_fixed: Vec<Option<f64>> = vec![None; n];
    let q_range = |i: usize| {
        idx.gens_at[i].iter().fold((0.0, 0.0), |(lo, hi), &g| {
            (lo + net.generators[g].q_min, hi + net.generators[g].q_max)
        })
    };

    let mut v: Vec<Complex64> = (0..n)
        .map(|i| {
            let mag = if kinds[i] == BusKind::Pq { 1.0 } else { setpoints.v[i] };
            let ang = setpoints.angles.as_ref().map_or(0.0, |a| a[i]);
            Complex64::from_polar(mag, ang)
        })
        .collect();
    let p_gen: Vec<f64> = (0..n)
        .map(|i| idx.gens_at[i].iter().map(|&g| setpoints.p[g]).sum())
        .collect();

    let mut run;
    let mut switched = 0;
    loop {
        let spec: Vec<Complex64> = (0..n)
            .map(|i| {
                let b = &net.buses[i];
                Complex64::new(p_gen[i] - b.p_demand, q_fixed[i].unwrap_or(0.0) - b.q_demand)
            })
            .collect();
        let pvpq: Vec<usize> = (0..n).filter(|&i| kinds[i] != BusKind::Slack).collect();
        let pq: Vec<usize> = (0..n).filter(|&i| kinds[i] == BusKind::Pq).collect();
        run = newton(&y, &mut v, &spec, &pvpq, &pq, options.tol, options.max_iter);
        if !run.converged || !options.enforce_q_limits {
            break;
        }
        let s = injections(&y, &v);
        let mut changed = false;
        for i in 0..n {
            if kinds[i] != BusKind::Pv {
                continue;
            }
            let q_gen = s[i].im + net.buses[i].q_demand;
            let (lo, hi) = q_range(i);
            let limit = if q_gen > hi + options.tol {
                Some(hi)
            } else if q_gen < lo - options.tol {
                Some(lo)
            } else {
                None
            };
            if let Some(limit) = limit {
                log::debug!("bus {} hits reactive limit {limit}; switching to PQ", net.buses[i].id);
                kinds[i] = BusKind::Pq;
                q_fixed[i] = Some(limit);
                changed = true;
                switched += 1;
            }
        }
        if !changed || switched > n {
            break;
        }
    }

    let (v_mag, v_ang): (Vec<f64>, Vec<f64>) = v.iter().map(|x| x.to_polar()).unzip();
    let s = injections(&y, &v);
    let mut gen_p = setpoints.p.clone();
    let mut gen_q = vec![0.0; ng];
    for i in 0..n {
        let gens = &idx.gens_at[i];
        if gens.is_empty() {
            continue;
        }
        if kinds[i] == BusKind::Slack {
            let others: f64 = gens[1..].iter().map(|&g| setpoints.p[g]).sum();
            gen_p[gens[0]] = s[i].re + net.buses[i].p_demand - others;
        }
        // Reactive output shared at a common fraction of each unit's range.
        let q_total = s[i].im + net.buses[i].q_demand;
        let (lo, hi) = q_range(i);
        let frac = if hi > lo { (q_total - lo) / (hi - lo) } else { 0.0 };
        for &g in gens {
            let gen = &net.generators[g];
            gen_q[g] = if hi > lo {
                gen.q_min + frac * (gen.q_max - gen.q_min)
            } else {
                q_total / gens.len() as f64
            };
        }
    }

    let branch_flows = net
        .branches
        .iter()
        .enumerate()
        .map(|(k, br)| {
            if !br.status {
                return None;
            }
            let (f, t) = idx.branch_ends[k];
            let a = crate::netmodel::BranchAdmittance::of(br);
            let i_f = a.yff * v[f] + a.yft * v[t];
            let i_t = a.ytf * v[f] + a.ytt * v[t];
            Some(BranchFlow {
                s_from: v[f] * i_f.conj(),
                s_to: v[t] * i_t.conj(),
            })
        })
        .collect();

    let mismatch = run.history.last().copied().unwrap_or(f64::INFINITY);
    let diagnostic = if run.singular {
        Some("singular Jacobian".to_string())
    } else if !run.converged {
        Some(format!(
            "no convergence in {} iterations (mismatch {mismatch:.3e})",
            options.max_iter
        ))
    } else {
        None
    };
    Ok(PowerFlowResult {
        converged: run.converged,
        iterations: run.history.len(),
        v_mag,
        v_ang,
        branch_flows,
        mismatch_inf_norm: mismatch,
        mismatch_history: run.history,
        gen_p,
        gen_q,
        bus_kinds: kinds,
        diagnostic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    VoltageLow,
    VoltageHigh,
    Thermal,
    AngleDifference,
    GeneratorActive,
    GeneratorReactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitViolation {
    pub kind: ViolationKind,
    /// Bus id, branch index or generator index depending on `kind`.
    pub element: usize,
    pub value: f64,
    pub limit: f64,
    /// Distance beyond the limit.
    pub magnitude: f64,
}

impl fmt::Display for LimitViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} at {}: {:.6} vs limit {:.6} (by {:.3e})",
            self.kind, self.element, self.value, self.limit, self.magnitude
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub voltage: Vec<LimitViolation>,
    pub thermal: Vec<LimitViolation>,
    pub angle: Vec<LimitViolation>,
    /// Generator limits; the slack unit absorbs losses and may leave its box.
    pub generator: Vec<LimitViolation>,
}

impl FeasibilityReport {
    pub fn is_empty(&self) -> bool {
        self.voltage.is_empty() && self.thermal.is_empty() && self.angle.is_empty() && self.generator.is_empty()
    }

    pub fn all(&self) -> impl Iterator<Item = &LimitViolation> {
        self.voltage
            .iter()
            .chain(&self.thermal)
            .chain(&self.angle)
            .chain(&self.generator)
    }
}

pub const DEFAULT_CHECK_TOL: f64 = 1e-4;

fn check(kind: ViolationKind, element: usize, value: f64, lo: f64, hi: f64, tol: f64, out: &mut Vec<LimitViolation>) {
    if value < lo - tol {
        out.push(LimitViolation {
            kind,
            element,
            value,
            limit: lo,
            magnitude: lo - value,
        });
    } else if value > hi + tol {
        out.push(LimitViolation {
            kind,
            element,
            value,
            limit: hi,
            magnitude: value - hi,
        });
    }
}

/// Limit violations of a converged power flow beyond `check_tol`.
pub fn feasibility_report(result: &PowerFlowResult, network: &Network, check_tol: f64) -> Result<FeasibilityReport, Error> {
    if !result.converged {
        return Err(Error::NotSolved(
            result.diagnostic.clone().unwrap_or_else(|| "power flow did not converge".into()),
        ));
    }
    if result.v_mag.len() != network.buses.len() || result.branch_flows.len() != network.branches.len() {
        return Err(Error::DimensionMismatch("power flow result does not match network".into()));
    }
    let idx = network.indexed()?;
    let mut report = FeasibilityReport::default();
    for (i, bus) in network.buses.iter().enumerate() {
        let v = result.v_mag[i];
        if v < bus.v_min - check_tol {
            check(ViolationKind::VoltageLow, bus.id, v, bus.v_min, f64::INFINITY, check_tol, &mut report.voltage);
        } else {
            check(ViolationKind::VoltageHigh, bus.id, v, f64::NEG_INFINITY, bus.v_max, check_tol, &mut report.voltage);
        }
    }
    for (k, (br, flow)) in network.branches.iter().zip(&result.branch_flows).enumerate() {
        let Some(flow) = flow else { continue };
        if br.has_rate() {
            let s = flow.s_from.norm().max(flow.s_to.norm());
            check(ViolationKind::Thermal, k, s, f64::NEG_INFINITY, br.rate, check_tol, &mut report.thermal);
        }
        let (f, t) = idx.branch_ends[k];
        let d = result.v_ang[f] - result.v_ang[t];
        check(ViolationKind::AngleDifference, k, d, br.angle_min, br.angle_max, check_tol, &mut report.angle);
    }
    for (g, gen) in network.generators.iter().enumerate() {
        check(ViolationKind::GeneratorActive, g, result.gen_p[g], gen.p_min, gen.p_max, check_tol, &mut report.generator);
        check(ViolationKind::GeneratorReactive, g, result.gen_q[g], gen.q_min, gen.q_max, check_tol, &mut report.generator);
    }
    Ok(report)
}
