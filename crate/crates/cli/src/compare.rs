use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use otsopf::formulations::FormulationKind;
use otsopf::netmodel::Network;

use crate::report::{write_json, CaseSummary, CompareReport, CompareRow, Settings, REPORT_VERSION};
use crate::run::{execute, Execution};
use crate::{exit_code, input, worst_exit, CommonArgs, EXIT_ERROR};

pub const UNSUPPORTED: &str = "unsupported: requires nonconvex solver";

const CSV_HEADER: &str = "\
# gap_vs_best_bound = |objective - L| / |L| where L is the tightest lower bound available for the
# row's problem class (fixed topology or switching): the largest bound among the SOCP rows of that
# class, or the DC row's own bound when no SOCP row ran. It stands in for a gap against an exact
# nonconvex AC solution, which this tool does not compute.
";

/// One slot of the comparison: a model we solve, or a placeholder for a
/// nonconvex model listed for completeness.
#[derive(Debug, Clone, Copy)]
enum Slot {
    Model(FormulationKind),
    Unsupported(&'static str),
}

fn default_slots() -> Vec<Slot> {
    use FormulationKind::*;
    vec![
        Slot::Model(DcOpf),
        Slot::Unsupported("ac-opf"),
        Slot::Model(SocpAcOpf),
        Slot::Model(SocpAcOpfMce),
        Slot::Model(DcOts),
        Slot::Unsupported("ac-ots"),
        Slot::Unsupported("socp-ots-bilinear"),
        Slot::Unsupported("socp-ots-big-m"),
        Slot::Model(OtsMisocpMce),
    ]
}

/// Lower bound contributed by a solved row.
fn row_bound(exec: &Execution) -> Option<f64> {
    let s = &exec.summary;
    s.best_bound.or(s.objective).filter(|_| s.objective.is_some())
}

/// Reference bound per problem class; SOCP bounds take precedence because
/// the DC model is not a relaxation of the AC problem.
fn reference(results: &[(FormulationKind, Option<&Execution>)], switching: bool) -> Option<f64> {
    let pick = |socp: bool| {
        results
            .iter()
            .filter(|(k, _)| k.is_switching() == switching && k.is_dc() != socp)
            .filter_map(|(_, e)| e.and_then(|e| row_bound(e)))
            .fold(None, |acc: Option<f64>, b| Some(acc.map_or(b, |a| a.max(b))))
    };
    pick(true).or_else(|| pick(false))
}

pub fn solve_all(
    net: &Network,
    kinds: &[FormulationKind],
    budget: Option<usize>,
    args: &CommonArgs,
) -> Vec<anyhow::Result<Execution>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<anyhow::Result<Execution>>>> = Mutex::new((0..kinds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..args.workers.min(kinds.len()).max(1) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= kinds.len() {
                    break;
                }
                let res = execute(net, kinds[k], budget, args, 1, None);
                results.lock().expect("result lock")[k] = Some(res);
            });
        }
    });
    results
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every slot solved"))
        .collect()
}

pub fn build_rows(slots: &[(String, Option<FormulationKind>)], results: &[Option<anyhow::Result<Execution>>]) -> Vec<CompareRow> {
    let solved: Vec<(FormulationKind, Option<&Execution>)> = slots
        .iter()
        .zip(results)
        .filter_map(|((_, kind), res)| kind.map(|k| (k, res.as_ref().and_then(|r| r.as_ref().ok()))))
        .collect();
    slots
        .iter()
        .zip(results)
        .map(|((name, kind), res)| match (kind, res) {
            (Some(kind), Some(Ok(exec))) => {
                let s = &exec.summary;
                let gap = match (s.objective, reference(&solved, kind.is_switching())) {
                    (Some(obj), Some(lb)) if lb != 0.0 => Some((obj - lb).abs() / lb.abs()),
                    (Some(obj), Some(_)) => Some(obj.abs()),
                    _ => None,
                };
                CompareRow {
                    formulation: name.clone(),
                    status: serde_json::to_value(s.status)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_owned))
                        .unwrap_or_default(),
                    runtime_s: Some(s.runtime_s),
                    objective: s.objective,
                    best_bound: s.best_bound,
                    gap_vs_best_bound: gap,
                    ac_feasible: s.ac_check.as_ref().map(|a| a.feasible),
                }
            }
            (Some(_), Some(Err(err))) => CompareRow {
                formulation: name.clone(),
                status: format!("error: {err}"),
                runtime_s: None,
                objective: None,
                best_bound: None,
                gap_vs_best_bound: None,
                ac_feasible: None,
            },
            _ => CompareRow {
                formulation: name.clone(),
                status: UNSUPPORTED.into(),
                runtime_s: None,
                objective: None,
                best_bound: None,
                gap_vs_best_bound: None,
                ac_feasible: None,
            },
        })
        .collect()
}

pub fn rows_to_csv(rows: &[CompareRow]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["formulation", "runtime_s", "objective", "gap_vs_best_bound", "ac_feasible", "status"])?;
    let num = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    for r in rows {
        w.write_record([
            r.formulation.clone(),
            num(r.runtime_s),
            num(r.objective),
            num(r.gap_vs_best_bound),
            r.ac_feasible.map_or(String::new(), |b| b.to_string()),
            r.status.clone(),
        ])?;
    }
    Ok(format!("{CSV_HEADER}{}", String::from_utf8(w.into_inner()?)?))
}

fn render(rows: &[CompareRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<18} {:>10} {:>16} {:>12} {:>6}  status",
        "formulation", "runtime_s", "objective", "gap", "AC ok"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<18} {:>10} {:>16} {:>12} {:>6}  {}",
            r.formulation,
            r.runtime_s.map_or("-".into(), |t| format!("{t:.3}")),
            r.objective.map_or("-".into(), |v| format!("{v:.4}")),
            r.gap_vs_best_bound.map_or("-".into(), |g| format!("{g:.3e}")),
            r.ac_feasible.map_or("-".into(), |b| if b { "yes" } else { "no" }.to_string()),
            r.status
        );
    }
    out
}

pub fn cmd_compare(args: &CommonArgs, kinds: &[FormulationKind], budget: Option<usize>) -> anyhow::Result<u8> {
    let net = input::load(args)?;
    let slots: Vec<Slot> = if kinds.is_empty() {
        default_slots()
    } else {
        kinds.iter().copied().map(Slot::Model).collect()
    };
    let named: Vec<(String, Option<FormulationKind>)> = slots
        .iter()
        .map(|s| match s {
            Slot::Model(k) => (k.name().to_string(), Some(*k)),
            Slot::Unsupported(name) => (name.to_string(), None),
        })
        .collect();
    let to_solve: Vec<FormulationKind> = named.iter().filter_map(|(_, k)| *k).collect();
    let mut solved = solve_all(&net, &to_solve, budget, args).into_iter();
    let results: Vec<Option<anyhow::Result<Execution>>> =
        named.iter().map(|(_, k)| k.and_then(|_| solved.next())).collect();
    let codes: Vec<u8> = results
        .iter()
        .flatten()
        .map(|r| r.as_ref().map_or(EXIT_ERROR, |e| exit_code(e.solved.status)))
        .collect();
    let rows = build_rows(&named, &results);
    print!("{}", render(&rows));
    if let Some(path) = &args.csv {
        std::fs::write(path, rows_to_csv(&rows)?).map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
    }
    if let Some(path) = &args.out {
        let report = CompareReport {
            report_version: REPORT_VERSION,
            command: "compare",
            case: CaseSummary::new(args, &net),
            settings: Settings::new(args),
            nsw: budget,
            rows,
        };
        write_json(path, &report)?;
    }
    Ok(worst_exit(codes))
}
