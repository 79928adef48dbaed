//! Branch-and-bound for mixed-binary SOCPs.
//!
//! Best-bound node selection, most-fractional branching (ties to the lowest
//! variable index), a rounding heuristic at every node, and pruning on
//! `bound ≥ incumbent − abs_gap`. Node relaxations are continuous solves with
//! binaries relaxed to `[0, 1]` inside the current fixings. With one worker
//! the search is fully deterministic.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::conic::{ClarabelBackend, ConicBackend, ConicProgram, ConicSolution, SolveOptions, SolveStatus, VarRef};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Branching {
    #[default]
    MostFractional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeOrder {
    #[default]
    BestBound,
}

#[derive(Debug, Clone)]
pub struct MibbOptions {
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub max_nodes: usize,
    pub time_limit: Option<Duration>,
    pub branching: Branching,
    pub node_order: NodeOrder,
    /// A relaxed binary within this distance of 0 or 1 counts as integral.
    pub int_tol: f64,
    /// Parallel node evaluations; only `1` is deterministic.
    pub workers: usize,
    /// Binary assignment (in [`ConicProgram::binaries`] order) tried as the
    /// first incumbent.
    pub initial_incumbent: Option<Vec<f64>>,
    pub record_log: bool,
    pub solve: SolveOptions,
}

impl Default for MibbOptions {
    fn default() -> Self {
        MibbOptions {
            rel_gap: 1e-6,
            abs_gap: 1e-8,
            max_nodes: 1_000_000,
            time_limit: None,
            branching: Branching::MostFractional,
            node_order: NodeOrder::BestBound,
            int_tol: 1e-6,
            workers: 1,
            initial_incumbent: None,
            record_log: false,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MibbStatus {
    /// Search completed within the gap tolerances.
    Optimal,
    /// Search completed but some node relaxations failed numerically, so the
    /// bound is not proven.
    FeasibleGap,
    Infeasible,
    NodeLimit,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeLogEntry {
    pub node: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub bound: f64,
    pub incumbent: f64,
}

#[derive(Debug, Clone)]
pub struct MibbResult {
    pub status: MibbStatus,
    /// Solution of the continuous program with binaries fixed to the
    /// incumbent assignment, including its duals.
    pub incumbent: Option<ConicSolution>,
    /// Incumbent binary values in [`ConicProgram::binaries`] order.
    pub assignment: Vec<f64>,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes_explored: usize,
    pub log: Vec<NodeLogEntry>,
    pub solve_time: f64,
}

impl MibbResult {
    pub fn objective(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective)
    }

    /// Row duals of the fixed-binary restriction at the incumbent.
    pub fn duals_at_incumbent(&self) -> Option<&[f64]> {
        self.incumbent.as_ref().map(|s| s.duals.as_slice())
    }
}

pub fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

/// Node log as CSV: `node,depth,bound,incumbent,parent`.
pub fn node_log_csv(log: &[NodeLogEntry]) -> String {
    let mut out = String::from("node,depth,bound,incumbent,parent\n");
    for e in log {
        let parent = e.parent.map(|p| p.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", e.node, e.depth, e.bound, e.incumbent, parent);
    }
    out
}

#[derive(Debug, Clone)]
struct Node {
    id: usize,
    parent: Option<usize>,
    depth: usize,
    bound: f64,
    /// Per binary: `None` free, `Some(v)` fixed.
    fixings: Vec<Option<f64>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Max-heap order: lowest bound first, then oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    backend: &'a dyn ConicBackend,
    relaxed: ConicProgram,
    binaries: Vec<VarRef>,
    options: &'a MibbOptions,
    started: Instant,
    incumbent: Option<(ConicSolution, Vec<f64>)>,
    tried: HashSet<Vec<bool>>,
    log: Vec<NodeLogEntry>,
}

impl Search<'_> {
    fn incumbent_obj(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |(s, _)| s.objective)
    }

    fn remaining(&self) -> Option<Duration> {
        self.options
            .time_limit
            .map(|limit| limit.saturating_sub(self.started.elapsed()))
    }

    fn timed_out(&self) -> bool {
        self.remaining().is_some_and(|r| r.is_zero())
    }

    fn solve_options(&self) -> SolveOptions {
        let mut opts = self.options.solve.clone();
        if let Some(rem) = self.remaining() {
            opts.time_limit = Some(opts.time_limit.map_or(rem, |t| t.min(rem)));
        }
        opts
    }

    fn node_program(&self, fixings: &[Option<f64>]) -> ConicProgram {
        let mut p = self.relaxed.clone();
        for (&v, fix) in self.binaries.iter().zip(fixings) {
            if let Some(val) = *fix {
                p.set_bounds(v, val, val);
            }
        }
        p
    }

    fn solve_node(&self, fixings: &[Option<f64>]) -> ConicSolution {
        let program = self.node_program(fixings);
        self.backend
            .solve(&program, &self.solve_options())
            .unwrap_or_else(|err| {
                log::warn!("node relaxation failed: {err}");
                ConicSolution::failed(SolveStatus::NumericalError, 0.0)
            })
    }

    /// Solves the restriction with every binary fixed; adopts it if better.
    fn try_assignment(&mut self, assignment: Vec<f64>) {
        let key: Vec<bool> = assignment.iter().map(|&v| v > 0.5).collect();
        if !self.tried.insert(key) {
            return;
        }
        let fixings: Vec<Option<f64>> = assignment.iter().map(|&v| Some(v)).collect();
        let sol = self.solve_node(&fixings);
        if sol.is_optimal() && sol.objective < self.incumbent_obj() {
            log::debug!("new incumbent {:.6}", sol.objective);
            self.incumbent = Some((sol, assignment));
        }
    }

    fn rounded(&self, sol: &ConicSolution) -> Vec<f64> {
        self.binaries
            .iter()
            .map(|&v| if sol.value(v) >= 0.5 { 1.0 } else { 0.0 })
            .collect()
    }

    /// Most fractional free binary, ties to the lowest index.
    fn branch_candidate(&self, node: &Node, sol: &ConicSolution) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, &v) in self.binaries.iter().enumerate() {
            if node.fixings[k].is_some() {
                continue;
            }
            let x = sol.value(v).clamp(0.0, 1.0);
            let frac = x.min(1.0 - x);
            if frac > self.options.int_tol && best.is_none_or(|(_, f)| frac > f) {
                best = Some((k, frac));
            }
        }
        best.map(|(k, _)| k)
    }
}

/// [`solve_misocp_with`] on the default interior-point backend.
pub fn solve_misocp(program: &ConicProgram, options: &MibbOptions) -> Result<MibbResult, Error> {
    solve_misocp_with(&ClarabelBackend, program, options)
}

pub fn solve_misocp_with(
    backend: &dyn ConicBackend,
    program: &ConicProgram,
    options: &MibbOptions,
) -> Result<MibbResult, Error> {
    program.validate()?;
    let binaries = program.binaries();
    for &v in &binaries {
        let var = program.var(v);
        if var.lower < 0.0 || var.upper > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "binary {} has bounds outside [0, 1]",
                var.name
            )));
        }
    }
    let mut search = Search {
        backend,
        relaxed: program.relaxed(),
        binaries,
        options,
        started: Instant::now(),
        incumbent: None,
        tried: HashSet::new(),
        log: Vec::new(),
    };

    if let Some(initial) = &options.initial_incumbent {
        if initial.len() != search.binaries.len() {
            return Err(Error::DimensionMismatch(format!(
                "initial incumbent has {} values for {} binaries",
                initial.len(),
                search.binaries.len()
            )));
        }
        search.try_assignment(initial.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect());
    }

    let root_fixings: Vec<Option<f64>> = search
        .binaries
        .iter()
        .map(|&v| {
            let var = program.var(v);
            (var.lower == var.upper).then_some(var.lower)
        })
        .collect();
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        id: 0,
        parent: None,
        depth: 0,
        bound: f64::NEG_INFINITY,
        fixings: root_fixings,
    });
    let mut next_id = 1;
    let mut nodes_explored = 0;
    let mut pruned_floor = f64::INFINITY;
    let mut unresolved_floor = f64::INFINITY;
    let mut limit: Option<MibbStatus> = None;
    let workers = options.workers.max(1);

    'search: while !heap.is_empty() {
        let inc = search.incumbent_obj();
        let open_floor = heap.peek().map_or(f64::INFINITY, |n| n.bound).min(unresolved_floor);
        if inc.is_finite() && (relative_gap(inc, open_floor) <= options.rel_gap || inc - open_floor <= options.abs_gap) {
            break;
        }
        if search.timed_out() {
            limit = Some(MibbStatus::TimeLimit);
            break;
        }
        if nodes_explored >= options.max_nodes {
            limit = Some(MibbStatus::NodeLimit);
            break;
        }

        let mut batch = Vec::with_capacity(workers);
        while batch.len() < workers && nodes_explored + batch.len() < options.max_nodes {
            let Some(node) = heap.pop() else { break };
            if node.bound >= search.incumbent_obj() - options.abs_gap {
                pruned_floor = pruned_floor.min(node.bound);
                continue;
            }
            batch.push(node);
        }
        if batch.is_empty() {
            continue;
        }
        let solutions: Vec<ConicSolution> = if batch.len() == 1 {
            vec![search.solve_node(&batch[0].fixings)]
        } else {
            let s = &search;
            std::thread::scope(|scope| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|node| scope.spawn(move || s.solve_node(&node.fixings)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| ConicSolution::failed(SolveStatus::NumericalError, 0.0)))
                    .collect()
            })
        };

        let mut batch = batch.into_iter().zip(solutions);
        while let Some((node, sol)) = batch.next() {
            match sol.status {
                SolveStatus::Optimal => {}
                SolveStatus::Infeasible => {
                    nodes_explored += 1;
                    continue;
                }
                SolveStatus::TimeLimit => {
                    heap.push(node);
                    for (rest, _) in batch {
                        heap.push(rest);
                    }
                    limit = Some(MibbStatus::TimeLimit);
                    break 'search;
                }
                SolveStatus::Unbounded | SolveStatus::NumericalError => {
                    nodes_explored += 1;
                    log::warn!("node {} relaxation ended with {:?}", node.id, sol.status);
                    unresolved_floor = unresolved_floor.min(node.bound);
                    continue;
                }
            }
            nodes_explored += 1;
            let bound = sol.objective.max(node.bound);
            if options.record_log {
                search.log.push(NodeLogEntry {
                    node: node.id,
                    parent: node.parent,
                    depth: node.depth,
                    bound: sol.objective,
                    incumbent: search.incumbent_obj(),
                });
            }
            if bound >= search.incumbent_obj() - options.abs_gap {
                pruned_floor = pruned_floor.min(bound);
                continue;
            }
            let rounded = search.rounded(&sol);
            match search.branch_candidate(&node, &sol) {
                None => {
                    search.try_assignment(rounded);
                }
                Some(k) => {
                    search.try_assignment(rounded);
                    for value in [0.0, 1.0] {
                        let mut fixings = node.fixings.clone();
                        fixings[k] = Some(value);
                        heap.push(Node {
                            id: next_id,
                            parent: Some(node.id),
                            depth: node.depth + 1,
                            bound,
                            fixings,
                        });
                        next_id += 1;
                    }
                }
            }
        }
    }

    let open_floor = heap.peek().map_or(f64::INFINITY, |n| n.bound);
    let inc = search.incumbent_obj();
    let best_bound = inc.min(pruned_floor).min(open_floor).min(unresolved_floor);
    let status = match limit {
        Some(l) => l,
        None if search.incumbent.is_none() && unresolved_floor.is_finite() => {
            return Err(Error::NotSolved("node relaxations failed numerically".into()));
        }
        None if search.incumbent.is_none() => MibbStatus::Infeasible,
        None if unresolved_floor.is_finite() => MibbStatus::FeasibleGap,
        None => MibbStatus::Optimal,
    };
    let (incumbent, assignment) = match search.incumbent {
        Some((sol, a)) => (Some(sol), a),
        None => (None, Vec::new()),
    };
    Ok(MibbResult {
        status,
        gap: relative_gap(inc, best_bound),
        best_bound: if incumbent.is_some() || limit.is_some() { best_bound } else { f64::INFINITY },
        incumbent,
        assignment,
        nodes_explored,
        log: search.log,
        solve_time: search.started.elapsed().as_secs_f64(),
    })
}

/// Copy of `program` with every binary fixed to `assignment`.
pub fn fix_binaries(program: &ConicProgram, assignment: &[f64]) -> Result<ConicProgram, Error> {
    let binaries = program.binaries();
    if binaries.len() != assignment.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {} binaries",
            assignment.len(),
            binaries.len()
        )));
    }
    let mut fixed = program.clone();
    for (&v, &val) in binaries.iter().zip(assignment) {
        let val = if val > 0.5 { 1.0 } else { 0.0 };
        fixed.set_bounds(v, val, val);
    }
    Ok(fixed)
}

/// Re-solves the continuous restriction at an integral assignment and returns
/// it with its row duals. This is how mixed-integer dispatches are priced.
pub fn resolve_incumbent_duals(
    program: &ConicProgram,
    assignment: &[f64],
    options: &SolveOptions,
) -> Result<ConicSolution, Error> {
    let fixed = fix_binaries(program, assignment)?;
    let sol = crate::conic::solve_continuous(&fixed, options)?;
    if !sol.is_optimal() {
        return Err(Error::NotSolved(format!("fixed-binary restriction ended {:?}", sol.status)));
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{AffineExpr, Sense};

    fn knapsack() -> ConicProgram {
        let mut p = ConicProgram::new();
        let y1 = p.add_binary("y1");
        let y2 = p.add_binary("y2");
        p.add_linear("pick one", vec![(y1, 1.0), (y2, 1.0)], Sense::Le, 1.0);
        p.add_objective_linear(y1, -3.0);
        p.add_objective_linear(y2, -2.0);
        p
    }

    fn enumerate(program: &ConicProgram) -> f64 {
        let n = program.binaries().len();
        (0..1u32 << n)
            .map(|mask| {
                let a: Vec<f64> = (0..n).map(|k| f64::from((mask >> k) & 1)).collect();
                let fixed = fix_binaries(program, &a).unwrap();
                let sol = crate::conic::solve_continuous(&fixed, &SolveOptions::default()).unwrap();
                if sol.is_optimal() {
                    sol.objective
                } else {
                    f64::INFINITY
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn knapsack_matches_enumeration() {
        let p = knapsack();
        let res = solve_misocp(&p, &MibbOptions::default()).unwrap();
        assert_eq!(res.status, MibbStatus::Optimal);
        assert!((res.objective() + 3.0).abs() < 1e-6);
        assert_eq!(res.assignment, vec![1.0, 0.0]);
        assert!((enumerate(&p) - res.objective()).abs() < 1e-6);
        assert!(res.best_bound <= res.objective() + 1e-9);
    }

    #[test]
    fn integral_root_needs_one_node() {
        let mut p = ConicProgram::new();
        let y = p.add_binary("y");
        let x = p.add_var("x", 0.0, 10.0);
        p.add_linear("link", vec![(x, 1.0), (y, -1.0)], Sense::Ge, 0.0);
        p.add_objective_linear(x, 1.0);
        p.add_objective_linear(y, 1.0);
        let res = solve_misocp(&p, &MibbOptions::default()).unwrap();
        assert_eq!(res.status, MibbStatus::Optimal);
        assert_eq!(res.nodes_explored, 1);
        assert!(res.objective().abs() < 1e-6);
    }

    #[test]
    fn infeasible_root() {
        let mut p = knapsack();
        let y = p.binaries()[0];
        p.add_linear("impossible", vec![(y, 1.0)], Sense::Ge, 2.0);
        let res = solve_misocp(&p, &MibbOptions::default()).unwrap();
        assert_eq!(res.status, MibbStatus::Infeasible);
        assert!(res.incumbent.is_none());
    }

    #[test]
    fn conic_problem_with_fractional_root() {
        // min -Σ wᵢyᵢ + ‖y‖² style trade-off through a cone on a budget.
        let mut p = ConicProgram::new();
        let ys: Vec<VarRef> = (0..4).map(|k| p.add_binary(format!("y{k}"))).collect();
        let t = p.add_var("t", 0.0, f64::INFINITY);
        let weights = [0.9, 1.3, 0.7, 1.1];
        for (y, w) in ys.iter().zip(weights) {
            p.add_objective_linear(*y, -w);
        }
        p.add_objective_linear(t, 0.6);
        p.add_linear(
            "budget",
            ys.iter().map(|&y| (y, 1.0)).collect(),
            Sense::Le,
            2.5,
        );
        p.add_cone(
            "norm",
            AffineExpr::var(t),
            ys.iter().map(|&y| AffineExpr::var(y)).collect(),
        );
        let res = solve_misocp(&p, &MibbOptions::default()).unwrap();
        assert_eq!(res.status, MibbStatus::Optimal);
        assert!((res.objective() - enumerate(&p)).abs() < 1e-6 * res.objective().abs().max(1.0));
    }

    #[test]
    fn deterministic_runs() {
        let p = knapsack();
        let opts = MibbOptions {
            record_log: true,
            ..Default::default()
        };
        let a = solve_misocp(&p, &opts).unwrap();
        let b = solve_misocp(&p, &opts).unwrap();
        assert_eq!(a.nodes_explored, b.nodes_explored);
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.log, b.log);
        let csv = node_log_csv(&a.log);
        assert!(csv.starts_with("node,depth,bound,incumbent,parent\n"));
    }

    #[test]
    fn node_limit_reported() {
        let p = knapsack();
        let opts = MibbOptions {
            max_nodes: 0,
            ..Default::default()
        };
        let res = solve_misocp(&p, &opts).unwrap();
        assert_eq!(res.status, MibbStatus::NodeLimit);
    }

    #[test]
    fn resolve_duals_at_assignment() {
        let mut p = ConicProgram::new();
        let y = p.add_binary("y");
        let x = p.add_var("x", 0.0, 10.0);
        let bal = p.add_linear("bal", vec![(x, 1.0), (y, 2.0)], Sense::Eq, 3.0);
        p.add_objective_linear(x, 4.0);
        let sol = resolve_incumbent_duals(&p, &[1.0], &SolveOptions::default()).unwrap();
        assert!((sol.dual(bal).unwrap() - 4.0).abs() < 1e-6);
        assert!(resolve_incumbent_duals(&p, &[1.0, 0.0], &SolveOptions::default()).is_err());
    }
}
