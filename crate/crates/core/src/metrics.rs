//! Market metrics from solved models: nodal prices, flow-limit prices,
//! congestion rent and generation cost, plus the nominal-versus-switching
//! comparison table.
//!
//! Prices come from the duals of the pricing solve. For switching models
//! that is the continuous restriction with binaries fixed at the incumbent.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::conic::ConicSolution;
use crate::formulations::{DispatchSolution, FormulationKind, LimitRows, ModelHandle, ModelSolution, RunStatus};
use crate::netmodel::Network;
use crate::Error;

/// |FMP| above this ($/MWh) marks a line as congested.
pub const DEFAULT_FMP_TOL: f64 = 1e-4;

fn row_dual(solution: &ConicSolution, row: crate::conic::ConstraintRef, what: &str) -> Result<f64, Error> {
    solution
        .dual(row)
        .map_err(|e| Error::MissingDual(format!("{what}: {e}")))
}

/// Nodal price per bus in $/MWh: the P-balance dual divided by `base_mva`.
pub fn lmp(handle: &ModelHandle, solution: &ConicSolution) -> Result<Vec<f64>, Error> {
    handle
        .p_balance
        .iter()
        .enumerate()
        .map(|(i, &row)| Ok(row_dual(solution, row, &format!("P-balance of bus {i}"))? / handle.base_mva))
        .collect()
}

/// Flow-limit price per branch in $/MWh. Zero for unrated, out-of-service
/// and opened lines. DC prices are signed by flow direction; SOCP prices
/// are the non-negative value of extra apparent-power capacity.
pub fn fmp(handle: &ModelHandle, solution: &ConicSolution) -> Result<Vec<f64>, Error> {
    handle
        .lines
        .iter()
        .enumerate()
        .map(|(k, line)| {
            let Some(line) = line else { return Ok(0.0) };
            if line.switch.is_some_and(|a| solution.value(a) < 0.5) {
                return Ok(0.0);
            }
            let what = format!("flow limit of branch {k}");
            Ok(match &line.limit {
                LimitRows::None => 0.0,
                LimitRows::DcBox { upper, lower } => {
                    (row_dual(solution, *upper, &what)? - row_dual(solution, *lower, &what)?) / handle.base_mva
                }
                LimitRows::Capacity { row, .. } => -row_dual(solution, *row, &what)? / handle.base_mva,
            })
        })
        .collect()
}

/// `Σ_loads p_D·LMP − Σ_gens p_G·LMP` in $/h.
pub fn congestion_rent(lmp: &[f64], dispatch: &DispatchSolution, network: &Network) -> Result<f64, Error> {
    if lmp.len() != network.buses.len() || dispatch.pg.len() != network.generators.len() {
        return Err(Error::DimensionMismatch("prices or dispatch do not match network".into()));
    }
    let lookup = network.bus_index();
    let base = network.base_mva;
    let paid: f64 = network
        .buses
        .iter()
        .zip(lmp)
        .map(|(b, price)| b.p_demand * base * price)
        .sum();
    let mut procured = 0.0;
    for (g, p) in network.generators.iter().zip(&dispatch.pg) {
        let i = lookup
            .get(&g.bus)
            .ok_or_else(|| Error::InvalidNetwork(format!("generator at missing bus {}", g.bus)))?;
        procured += p * base * lmp[*i];
    }
    Ok(paid - procured)
}

/// `Σ c2·P² + c1·P + c0` with P in MW.
pub fn total_cost(dispatch: &DispatchSolution, network: &Network) -> f64 {
    network
        .generators
        .iter()
        .zip(&dispatch.pg)
        .map(|(g, &p)| g.cost(p, network.base_mva))
        .sum()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Population standard deviation.
fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    mean(&xs.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>()).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub formulation: FormulationKind,
    pub status: RunStatus,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub lmp: Vec<f64>,
    pub fmp: Vec<f64>,
    pub congestion_rent: f64,
    pub total_cost: f64,
    pub avg_lmp: f64,
    pub lmp_std: f64,
    /// Mean |FMP| over lines closed in the solution.
    pub avg_abs_fmp: f64,
    pub congested_lines: Vec<usize>,
    pub open_lines: Vec<usize>,
    /// Branches in service in the input network.
    pub in_service_lines: usize,
    pub runtime: f64,
}

/// Prices and summary statistics of a solved model.
pub fn study_report(
    network: &Network,
    handle: &ModelHandle,
    solved: &ModelSolution,
    fmp_tol: f64,
) -> Result<StudyReport, Error> {
    let pricing = solved
        .solution
        .as_ref()
        .ok_or_else(|| Error::NotSolved(format!("run ended with status {:?}", solved.status)))?;
    let dispatch = solved.dispatch(handle)?;
    let lmp = lmp(handle, pricing)?;
    let fmp = fmp(handle, pricing)?;
    let closed: Vec<f64> = fmp
        .iter()
        .zip(&dispatch.open)
        .filter(|(_, &open)| !open)
        .map(|(f, _)| f.abs())
        .collect();
    let congested_lines = fmp
        .iter()
        .enumerate()
        .filter(|(_, f)| f.abs() > fmp_tol)
        .map(|(k, _)| k)
        .collect();
    Ok(StudyReport {
        formulation: handle.kind,
        status: solved.status,
        objective: solved.objective(),
        best_bound: solved.best_bound,
        gap: solved.gap,
        congestion_rent: congestion_rent(&lmp, &dispatch, network)?,
        total_cost: total_cost(&dispatch, network),
        avg_lmp: mean(&lmp),
        lmp_std: std_dev(&lmp),
        avg_abs_fmp: mean(&closed),
        congested_lines,
        open_lines: dispatch.switched_open.clone(),
        in_service_lines: network.branches.iter().filter(|b| b.status).count(),
        runtime: solved.runtime,
        lmp,
        fmp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowFormat {
    Money,
    Price,
    SmallPrice,
    Count,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub format: RowFormat,
    pub nominal: Option<f64>,
    pub ots: Option<f64>,
    /// `(ots − nominal)/|nominal|` in percent.
    pub delta_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub total_lines: usize,
}

fn delta_pct(nominal: f64, ots: f64) -> Option<f64> {
    if nominal == ots {
        Some(0.0)
    } else if nominal == 0.0 {
        None
    } else {
        Some((ots - nominal) / nominal.abs() * 100.0)
    }
}

/// Side-by-side metrics of a nominal and a switching run. A missing run
/// leaves its column as `N/A`.
pub fn compare(nominal: Option<&StudyReport>, ots: Option<&StudyReport>) -> ComparisonTable {
    type Getter = fn(&StudyReport) -> f64;
    let specs: [(&str, RowFormat, Getter, bool); 7] = [
        ("Total generation cost ($/h)", RowFormat::Money, |r| r.total_cost, true),
        ("Congestion rent ($/h)", RowFormat::Money, |r| r.congestion_rent, true),
        ("Average LMP ($/MWh)", RowFormat::Price, |r| r.avg_lmp, true),
        ("Average |FMP| ($/MWh)", RowFormat::SmallPrice, |r| r.avg_abs_fmp, true),
        ("LMP standard deviation ($/MWh)", RowFormat::Price, |r| r.lmp_std, true),
        ("No. of congested lines", RowFormat::Count, |r| r.congested_lines.len() as f64, false),
        ("Optimal no. of open lines", RowFormat::Count, |r| r.open_lines.len() as f64, false),
    ];
    let rows = specs
        .iter()
        .enumerate()
        .map(|(k, &(label, format, get, with_delta))| {
            // Nominal runs have no switching decision.
            let nom = if k == 6 { None } else { nominal.map(get) };
            let o = ots.map(get);
            let delta = match (nom, o) {
                (Some(a), Some(b)) if with_delta => delta_pct(a, b),
                _ => None,
            };
            ComparisonRow {
                label: label.to_string(),
                format,
                nominal: nom,
                ots: o,
                delta_pct: delta,
            }
        })
        .collect();
    let total_lines = nominal.or(ots).map_or(0, |r| r.in_service_lines);
    ComparisonTable { rows, total_lines }
}

/// `12345.6` → `"12,346"`.
pub fn thousands(x: f64) -> String {
    let rounded = x.round();
    let digits = format!("{:.0}", rounded.abs());
    let mut out = String::new();
    for (k, ch) in digits.chars().enumerate() {
        if k > 0 && (digits.len() - k) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    if rounded < 0.0 {
        format!("-{out}")
    } else {
        out
    }
}

fn format_value(format: RowFormat, x: f64) -> String {
    match format {
        RowFormat::Money => thousands(x),
        RowFormat::Price => format!("{x:.2}"),
        RowFormat::SmallPrice => format!("{x:.4}"),
        RowFormat::Count => format!("{x:.0}"),
    }
}

impl ComparisonRow {
    pub fn nominal_cell(&self) -> String {
        self.nominal.map_or("N/A".into(), |x| format_value(self.format, x))
    }

    pub fn ots_cell(&self, total_lines: usize, open_row: bool) -> String {
        let Some(x) = self.ots else { return "N/A".into() };
        let value = format_value(self.format, x);
        if open_row {
            return format!("{value} (out of {total_lines} total)");
        }
        match self.delta_pct {
            Some(d) => format!("{value}  ({d:.2}%)"),
            None if self.format == RowFormat::Count || self.nominal.is_none() => value,
            None => format!("{value}  (n/a)"),
        }
    }
}

impl ComparisonTable {
    pub fn render(&self) -> String {
        let cells: Vec<(String, String, String)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(k, r)| (r.label.clone(), r.nominal_cell(), r.ots_cell(self.total_lines, k == 6)))
            .collect();
        let w0 = cells.iter().map(|c| c.0.len()).max().unwrap_or(0).max(6);
        let w1 = cells.iter().map(|c| c.1.len()).max().unwrap_or(0).max(7);
        let mut out = String::new();
        let _ = writeln!(out, "{:<w0$}  {:>w1$}  {}", "", "Nominal", "OTS");
        for (label, nom, ots) in cells {
            let _ = writeln!(out, "{label:<w0$}  {nom:>w1$}  {ots}");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,nominal,ots,delta_pct\n");
        let cell = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        for r in &self.rows {
            let label = if r.label.contains(',') { format!("\"{}\"", r.label) } else { r.label.clone() };
            let _ = writeln!(out, "{label},{},{},{}", cell(r.nominal), cell(r.ots), cell(r.delta_pct));
        }
        out
    }
}
