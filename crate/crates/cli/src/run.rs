use std::fmt::Write as _;

use otsopf::acfeas::{feasibility_report, island_check, newton_power_flow, GenSetpoints, PowerFlowOptions, DEFAULT_CHECK_TOL};
use otsopf::formulations::{build, solve_model, DispatchSolution, FormulationKind, ModelSolution, SolveConfig};
use otsopf::metrics::{study_report, StudyReport, DEFAULT_FMP_TOL};
use otsopf::netmodel::Network;

use crate::report::{finite, write_json, AcCheck, CaseSummary, RunReport, RunSummary, Settings, REPORT_VERSION};
use crate::{exit_code, input, CommonArgs};

/// Everything produced by one build-solve-verify pass.
pub struct Execution {
    pub solved: ModelSolution,
    pub summary: RunSummary,
    /// Binary assignment of the incumbent, in program order.
    pub assignment: Option<Vec<f64>>,
}

impl Execution {
    pub fn metrics(&self) -> Option<&StudyReport> {
        self.summary.metrics.as_ref()
    }
}

pub fn ac_check(net: &Network, dispatch: &DispatchSolution) -> AcCheck {
    let setpoints = GenSetpoints::from_dispatch(dispatch);
    match newton_power_flow(net, &setpoints, &dispatch.switched_open, &PowerFlowOptions::default()) {
        Ok(pf) if pf.converged => match feasibility_report(&pf, net, DEFAULT_CHECK_TOL) {
            Ok(rep) => AcCheck {
                converged: true,
                iterations: pf.iterations,
                mismatch_inf_norm: finite(pf.mismatch_inf_norm),
                feasible: rep.is_empty(),
                violations: Some(rep),
                diagnostic: None,
            },
            Err(err) => AcCheck {
                converged: true,
                iterations: pf.iterations,
                mismatch_inf_norm: finite(pf.mismatch_inf_norm),
                feasible: false,
                violations: None,
                diagnostic: Some(err.to_string()),
            },
        },
        Ok(pf) => AcCheck {
            converged: false,
            iterations: pf.iterations,
            mismatch_inf_norm: finite(pf.mismatch_inf_norm),
            feasible: false,
            violations: None,
            diagnostic: pf.diagnostic,
        },
        Err(err) => AcCheck {
            converged: false,
            iterations: 0,
            mismatch_inf_norm: None,
            feasible: false,
            violations: None,
            diagnostic: Some(err.to_string()),
        },
    }
}

pub fn execute(
    net: &Network,
    kind: FormulationKind,
    budget: Option<usize>,
    args: &CommonArgs,
    workers: usize,
    seed: Option<Vec<f64>>,
) -> anyhow::Result<Execution> {
    let handle = build(net, kind, budget, args.big_m)?;
    for w in &handle.warnings {
        log::warn!("{kind}: {w}");
    }
    let mut config = SolveConfig::default();
    config.solve.time_limit = args.time_limit();
    config.mibb.time_limit = args.time_limit();
    config.mibb.workers = workers;
    config.mibb.initial_incumbent = seed;
    let solved = solve_model(&handle, &config)?;
    let mut warnings = handle.warnings.clone();
    let (mut dispatch, mut metrics, mut ac, mut connected) = (None, None, None, None);
    if solved.status.has_solution() {
        let d = solved.dispatch(&handle)?;
        let islands = island_check(net, &d.switched_open).len();
        if islands > 1 {
            let msg = format!("switched topology splits the network into {islands} islands; run is not a valid operating point");
            log::warn!("{kind}: {msg}");
            warnings.push(msg);
        }
        connected = Some(islands <= 1);
        metrics = Some(study_report(net, &handle, &solved, DEFAULT_FMP_TOL)?);
        ac = Some(ac_check(net, &d));
        dispatch = Some(d);
    }
    let assignment = solved.mibb.as_ref().filter(|r| r.incumbent.is_some()).map(|r| r.assignment.clone());
    let summary = RunSummary {
        formulation: kind,
        nsw: budget,
        status: solved.status,
        objective: finite(solved.objective()),
        best_bound: finite(solved.best_bound),
        gap: finite(solved.gap),
        nodes: solved.nodes,
        runtime_s: solved.runtime,
        warnings,
        topology_connected: connected,
        ac_check: ac,
        metrics,
        dispatch,
    };
    Ok(Execution {
        solved,
        summary,
        assignment,
    })
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map_or("n/a".into(), |v| format!("{v:.digits$}"))
}

pub fn describe(s: &RunSummary) -> String {
    let mut out = String::new();
    let nsw = s.nsw.map_or("none".into(), |n| n.to_string());
    let _ = writeln!(out, "formulation      {} (nsw {nsw})", s.formulation);
    let _ = writeln!(out, "status           {:?}", s.status);
    let _ = writeln!(out, "objective        {}", opt(s.objective, 4));
    let _ = writeln!(out, "best bound       {}", opt(s.best_bound, 4));
    let _ = writeln!(out, "gap              {}", opt(s.gap, 8));
    let _ = writeln!(out, "nodes            {}", s.nodes);
    let _ = writeln!(out, "runtime (s)      {:.3}", s.runtime_s);
    if let Some(m) = &s.metrics {
        let _ = writeln!(out, "congestion rent  {:.4}", m.congestion_rent);
        let _ = writeln!(out, "average LMP      {:.4}", m.avg_lmp);
        let _ = writeln!(out, "congested lines  {:?}", m.congested_lines);
        let _ = writeln!(out, "open lines       {:?}", m.open_lines);
    }
    if let Some(ac) = &s.ac_check {
        let verdict = if ac.feasible { "feasible" } else { "infeasible" };
        let _ = writeln!(out, "AC check         {verdict} (converged {}, {} iterations)", ac.converged, ac.iterations);
        if let Some(v) = &ac.violations {
            for viol in v.all() {
                let _ = writeln!(out, "  {viol}");
            }
        }
        if let Some(d) = &ac.diagnostic {
            let _ = writeln!(out, "  {d}");
        }
    }
    out
}

fn write_bus_csv(path: &std::path::Path, net: &Network, s: &RunSummary) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bus", "vm", "va_rad", "lmp"])?;
    for (i, bus) in net.buses.iter().enumerate() {
        let vm = s.dispatch.as_ref().map(|d| d.e[i].max(0.0).sqrt());
        let va = s.dispatch.as_ref().and_then(|d| d.theta.as_ref()).map(|t| t[i]);
        let lmp = s.metrics.as_ref().map(|m| m.lmp[i]);
        let cell = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        w.write_record([bus.id.to_string(), cell(vm), cell(va), cell(lmp)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_run(args: &CommonArgs, kind: FormulationKind, budget: Option<usize>) -> anyhow::Result<u8> {
    let net = input::load(args)?;
    let exec = execute(&net, kind, budget, args, args.workers, None)?;
    print!("{}", describe(&exec.summary));
    if let Some(path) = &args.csv {
        write_bus_csv(path, &net, &exec.summary)?;
    }
    let code = exit_code(exec.solved.status);
    if let Some(path) = &args.out {
        let report = RunReport {
            report_version: REPORT_VERSION,
            command: "run",
            case: CaseSummary::new(args, &net),
            settings: Settings::new(args),
            run: exec.summary,
        };
        write_json(path, &report)?;
    }
    Ok(code)
}
