mod compare;
mod input;
mod report;
mod run;
mod study;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use otsopf::formulations::{FormulationKind, RunStatus, DEFAULT_BIG_M};

/// Exit code contract: 0 solved, 1 error, 2 infeasible, 3 stopped by a limit.
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_LIMIT: u8 = 3;

#[derive(Parser)]
#[command(name = "otsopf", version, about = "Optimal power flow and transmission switching studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one formulation, verify the dispatch with an AC power flow and
    /// report prices.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "socp-mce", value_parser = parse_kind)]
        formulation: FormulationKind,
        /// Maximum number of lines opened: an integer or `none`.
        #[arg(long, default_value = "none", value_parser = parse_budget)]
        nsw: Budget,
    },
    /// Solve several formulations and tabulate runtime, objective and gap.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated list; defaults to every formulation, with
        /// placeholder rows for the nonconvex ones.
        #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
        formulation: Vec<FormulationKind>,
        #[arg(long, default_value = "none", value_parser = parse_budget)]
        nsw: Budget,
    },
    /// Nominal SOCP-MCE dispatch against transmission switching, one
    /// comparison per budget.
    OtsStudy {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated budgets, e.g. `0,2,4,none`.
        #[arg(long, value_delimiter = ',', default_value = "none", value_parser = parse_budget)]
        nsw: Vec<Budget>,
    },
}

#[derive(Args, Clone, Debug)]
pub struct CommonArgs {
    /// MATPOWER `.m` or native `.json` case, or the name of a bundled case.
    #[arg(long)]
    pub case: String,
    /// File listing switchable branch indices, one per line.
    #[arg(long)]
    pub switchable: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BIG_M)]
    pub big_m: f64,
    /// Wall-clock limit in seconds for each solve.
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

impl CommonArgs {
    fn check(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.big_m.is_finite() && self.big_m > 0.0, "--big-m must be positive");
        if let Some(t) = self.time_limit {
            anyhow::ensure!(t.is_finite() && t > 0.0, "--time-limit must be a positive number of seconds");
        }
        anyhow::ensure!(self.workers >= 1, "--workers must be at least 1");
        Ok(())
    }

    pub fn time_limit(&self) -> Option<Duration> {
        self.time_limit.map(Duration::from_secs_f64)
    }
}

/// Switching budget; `None` means unlimited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget(pub Option<usize>);

impl FromStr for Budget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "none" => Ok(Budget(None)),
            t => t
                .parse()
                .map(|n| Budget(Some(n)))
                .map_err(|_| format!("expected a non-negative integer or `none`, got {t:?}")),
        }
    }
}

fn parse_budget(s: &str) -> Result<Budget, String> {
    s.parse()
}

fn parse_kind(s: &str) -> Result<FormulationKind, String> {
    s.parse().map_err(|e: otsopf::Error| e.to_string())
}

pub fn exit_code(status: RunStatus) -> u8 {
    match status {
        RunStatus::Optimal | RunStatus::FeasibleGap => 0,
        RunStatus::Infeasible => EXIT_INFEASIBLE,
        RunStatus::TimeLimit | RunStatus::NodeLimit => EXIT_LIMIT,
        RunStatus::Unbounded | RunStatus::NumericalError => EXIT_ERROR,
    }
}

/// Combined code for several runs: an error beats infeasibility, which
/// beats a limit.
pub fn worst_exit(codes: impl IntoIterator<Item = u8>) -> u8 {
    let rank = |c: u8| match c {
        EXIT_ERROR => 3,
        EXIT_INFEASIBLE => 2,
        EXIT_LIMIT => 1,
        _ => 0,
    };
    codes.into_iter().max_by_key(|&c| rank(c)).unwrap_or(0)
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Run { common, formulation, nsw } => {
            common.check()?;
            run::cmd_run(&common, formulation, nsw.0)
        }
        Command::Compare { common, formulation, nsw } => {
            common.check()?;
            compare::cmd_compare(&common, &formulation, nsw.0)
        }
        Command::OtsStudy { common, nsw } => {
            common.check()?;
            let budgets: Vec<Option<usize>> = nsw.into_iter().map(|b| b.0).collect();
            study::cmd_ots_study(&common, &budgets)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
