use otsopf::formulations::FormulationKind;
use otsopf::metrics::compare;

use crate::report::{write_json, CaseSummary, Settings, StudyEntry, StudyReportFile, REPORT_VERSION};
use crate::run::{describe, execute, Execution};
use crate::{exit_code, input, worst_exit, CommonArgs};

fn opened(assignment: &[f64]) -> usize {
    assignment.iter().filter(|&&a| a < 0.5).count()
}

fn within(budget: Option<usize>, n: usize) -> bool {
    budget.is_none_or(|b| n <= b)
}

/// Objectives ordered by budget (unlimited last) never increase beyond a
/// relative tolerance.
pub fn is_monotone(points: &[(Option<usize>, f64)]) -> bool {
    let mut sorted: Vec<_> = points.iter().filter(|(_, v)| v.is_finite()).copied().collect();
    sorted.sort_by_key(|(b, _)| b.unwrap_or(usize::MAX));
    sorted.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-6 * w[0].1.abs().max(1.0))
}

pub fn cmd_ots_study(args: &CommonArgs, budgets: &[Option<usize>]) -> anyhow::Result<u8> {
    let net = input::load(args)?;
    let nominal = execute(&net, FormulationKind::SocpAcOpfMce, None, args, args.workers, None)?;
    let mut codes = vec![exit_code(nominal.solved.status)];
    let mut runs: Vec<Execution> = Vec::new();
    for &budget in budgets {
        // Any earlier incumbent that fits this budget is a valid start.
        let seed = runs
            .iter()
            .filter_map(|r| Some((r.assignment.as_ref()?, r.summary.objective?)))
            .filter(|(a, _)| within(budget, opened(a)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(a, _)| a.clone());
        let exec = execute(&net, FormulationKind::OtsMisocpMce, budget, args, args.workers, seed)?;
        codes.push(exit_code(exec.solved.status));
        runs.push(exec);
    }
    let points: Vec<(Option<usize>, f64)> = budgets
        .iter()
        .zip(&runs)
        .map(|(&b, r)| (b, r.summary.objective.unwrap_or(f64::NAN)))
        .collect();
    let monotone = is_monotone(&points);
    if !monotone {
        log::warn!("objective is not monotone in the budget: {points:?}");
    }

    println!("nominal (socp-mce)");
    print!("{}", describe(&nominal.summary));
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["nsw", "metric", "nominal", "ots", "delta_pct"])?;
    let mut entries = Vec::new();
    for (&budget, run) in budgets.iter().zip(runs) {
        let table = compare(nominal.metrics(), run.metrics());
        let label = budget.map_or("none".into(), |b| b.to_string());
        println!();
        println!("OTS with nsw = {label}: {:?}, gap {:.3e}", run.summary.status, run.solved.gap);
        print!("{}", table.render());
        let cell = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        for row in &table.rows {
            csv.write_record([label.clone(), row.label.clone(), cell(row.nominal), cell(row.ots), cell(row.delta_pct)])?;
        }
        entries.push(StudyEntry {
            nsw: budget,
            run: run.summary,
            table,
        });
    }
    if points.len() > 1 {
        println!();
        println!("budget sweep monotone: {monotone}");
    }
    if let Some(path) = &args.csv {
        std::fs::write(path, csv.into_inner()?).map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
    }
    if let Some(path) = &args.out {
        let report = StudyReportFile {
            report_version: REPORT_VERSION,
            command: "ots-study",
            case: CaseSummary::new(args, &net),
            settings: Settings::new(args),
            nominal: nominal.summary,
            budgets: entries,
            monotone,
        };
        write_json(path, &report)?;
    }
    Ok(worst_exit(codes))
}
