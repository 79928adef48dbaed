//! Machine-readable reports. The layout is described by
//! `data/report.schema.json`; bump [`REPORT_VERSION`] on incompatible changes.

use std::path::Path;

use anyhow::Context;
use otsopf::acfeas::FeasibilityReport;
use otsopf::formulations::{DispatchSolution, FormulationKind, RunStatus};
use otsopf::metrics::{ComparisonTable, StudyReport};
use otsopf::netmodel::Network;
use serde::Serialize;

use crate::CommonArgs;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct CaseSummary {
    pub source: String,
    pub buses: usize,
    pub branches: usize,
    pub generators: usize,
    pub switchable: usize,
}

impl CaseSummary {
    pub fn new(args: &CommonArgs, net: &Network) -> Self {
        CaseSummary {
            source: args.case.clone(),
            buses: net.buses.len(),
            branches: net.branches.len(),
            generators: net.generators.len(),
            switchable: net.branches.iter().filter(|b| b.status && b.switchable).count(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Settings {
    pub big_m: f64,
    pub time_limit_s: Option<f64>,
    pub workers: usize,
}

impl Settings {
    pub fn new(args: &CommonArgs) -> Self {
        Settings {
            big_m: args.big_m,
            time_limit_s: args.time_limit,
            workers: args.workers,
        }
    }
}

/// Newton power flow started from the optimized dispatch.
#[derive(Debug, Clone, Serialize)]
pub struct AcCheck {
    pub converged: bool,
    pub iterations: usize,
    pub mismatch_inf_norm: Option<f64>,
    /// Converged with no limit violation beyond the check tolerance.
    pub feasible: bool,
    pub violations: Option<FeasibilityReport>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub formulation: FormulationKind,
    pub nsw: Option<usize>,
    pub status: RunStatus,
    pub objective: Option<f64>,
    pub best_bound: Option<f64>,
    pub gap: Option<f64>,
    pub nodes: usize,
    pub runtime_s: f64,
    pub warnings: Vec<String>,
    /// False when the switched topology splits the network; such a run is
    /// not a valid operating point.
    pub topology_connected: Option<bool>,
    pub ac_check: Option<AcCheck>,
    pub metrics: Option<StudyReport>,
    pub dispatch: Option<DispatchSolution>,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub report_version: u32,
    pub command: &'static str,
    pub case: CaseSummary,
    pub settings: Settings,
    pub run: RunSummary,
}

#[derive(Debug, Serialize)]
pub struct CompareRow {
    pub formulation: String,
    pub status: String,
    pub runtime_s: Option<f64>,
    pub objective: Option<f64>,
    pub best_bound: Option<f64>,
    pub gap_vs_best_bound: Option<f64>,
    pub ac_feasible: Option<bool>,
}

#[derive(Debug, Serialize)]
pub struct CompareReport {
    pub report_version: u32,
    pub command: &'static str,
    pub case: CaseSummary,
    pub settings: Settings,
    pub nsw: Option<usize>,
    pub rows: Vec<CompareRow>,
}

#[derive(Debug, Serialize)]
pub struct StudyEntry {
    pub nsw: Option<usize>,
    pub run: RunSummary,
    pub table: ComparisonTable,
}

#[derive(Debug, Serialize)]
pub struct StudyReportFile {
    pub report_version: u32,
    pub command: &'static str,
    pub case: CaseSummary,
    pub settings: Settings,
    pub nominal: RunSummary,
    pub budgets: Vec<StudyEntry>,
    /// Objective non-increasing in the budget, within 1e-6 relative.
    pub monotone: bool,
}

pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}
