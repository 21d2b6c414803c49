//! Best-bound branch-and-bound with a pluggable variable-selection policy.
//!
//! Children are solved eagerly when a node is branched, so every node in the
//! tree carries an exact LP bound and pseudocosts are updated as soon as a
//! child's bound is known. With a cutoff supplied the primal bound is fixed
//! at the cutoff and no incumbents are tracked; without one, integral LP
//! solutions update the incumbent.

mod gap;
pub mod policies;
pub mod pseudocost;

pub use gap::{compute_gap, timeline_pdi, PdiAccumulator};
pub use policies::{baseline_policies, BaselinePolicy, PolicyKind};
pub use pseudocost::PseudocostTable;

use crate::features::{self, ColumnStats, NodeView, SolverSnapshot, StateFeatures, TreeView};
use crate::lp::{self, BasisStatus, LeRows, LpLimits, LpProblem, LpStatus};
use crate::milp::ValidInstance;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::time::Instant;

/// Bound-based pruning tolerance relative to the primal bound.
pub const PRUNE_TOL: f64 = 1e-9;
pub const DEFAULT_INTEGRALITY_TOL: f64 = 1e-6;
/// Gain assigned to a strong-branching child whose LP is infeasible.
pub const INFEASIBLE_GAIN: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchDirection {
    Down,
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundChange {
    pub var: usize,
    pub side: BoundSide,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Open,
    Branched,
    PrunedBound,
    PrunedInfeasible,
    FathomedIntegral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChildSide {
    Left,
    Right,
    Root,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: usize,
    pub parent_id: Option<usize>,
    pub depth: usize,
    /// Bound tightenings relative to the parent.
    pub bound_changes: Vec<BoundChange>,
    pub lp_bound: f64,
    /// Kept only while the node is open.
    pub lp_solution: Option<Vec<f64>>,
    pub status: NodeStatus,
    pub child_side: ChildSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunStatus {
    Optimal,
    TimeLimit,
    Infeasible,
    Unbounded,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Optimal => "OPTIMAL",
            RunStatus::TimeLimit => "TIMELIMIT",
            RunStatus::Infeasible => "INFEASIBLE",
            RunStatus::Unbounded => "UNBOUNDED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "OPTIMAL" => Some(RunStatus::Optimal),
            "TIMELIMIT" => Some(RunStatus::TimeLimit),
            "INFEASIBLE" => Some(RunStatus::Infeasible),
            "UNBOUNDED" => Some(RunStatus::Unbounded),
            _ => None,
        }
    }
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why the search loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Completed,
    NodeBudget,
    DecisionBudget,
    TimeBudget,
    /// Stopped after `truncate_after` decisions; the next state is pending.
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    /// One clock unit per branching decision.
    Decisions,
    /// Elapsed seconds.
    WallClock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cutoff: Option<f64>,
    pub node_budget: usize,
    pub decision_budget: usize,
    /// Seconds; only consulted in [`ClockMode::WallClock`].
    pub time_budget: f64,
    pub integrality_tol: f64,
    pub seed: u64,
    pub clock: ClockMode,
    pub truncate_after: Option<usize>,
    pub lp_limits: LpLimits,
    /// Reference PDI for the progress feature; 1.0 when unknown.
    pub pdi_reference: Option<f64>,
    pub keep_tree: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cutoff: None,
            node_budget: 100_000,
            decision_budget: 100_000,
            time_budget: 3600.0,
            integrality_tol: DEFAULT_INTEGRALITY_TOL,
            seed: 0,
            clock: ClockMode::Decisions,
            truncate_after: None,
            lp_limits: LpLimits::default(),
            pdi_reference: None,
            keep_tree: false,
        }
    }
}

/// Solver observables at the moment a decision is requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub nodes_explored: usize,
    pub gap: f64,
    pub pdi: f64,
    pub tau: f64,
    pub open: usize,
    pub decisions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionEvent {
    pub decision: usize,
    pub node_id: usize,
    pub depth: usize,
    pub num_candidates: usize,
    pub action: usize,
    pub var: usize,
    pub clock: f64,
    pub before: Observation,
}

impl DecisionEvent {
    pub fn log_line(&self) -> String {
        format!(
            "decision {} node {} depth {} ncands {} action {} clock {}",
            self.decision, self.node_id, self.depth, self.num_candidates, self.action, self.clock
        )
    }
}

/// Line-oriented event log for a run.
pub fn format_event_log(events: &[DecisionEvent]) -> String {
    let mut out = String::new();
    for e in events {
        let _ = writeln!(out, "{}", e.log_line());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub nodes_explored: usize,
    pub status: RunStatus,
    pub stop_reason: StopReason,
    pub gap_timeline: Vec<(f64, f64)>,
    pub pdi: f64,
    pub decisions: usize,
    pub wall_or_budget_clock: f64,
    pub primal_bound: f64,
    pub dual_bound: f64,
    pub root_bound: f64,
    pub incumbent: Option<Vec<f64>>,
    pub lp_iterations: usize,
    pub strong_branch_lps: usize,
    pub max_depth: usize,
    pub events: Vec<DecisionEvent>,
    pub final_observation: Observation,
    /// State at which a truncated run stopped.
    pub pending_state: Option<StateFeatures>,
    /// Every node, when `keep_tree` is set.
    pub tree: Vec<NodeRecord>,
}

impl RunStats {
    /// Gap at the first decision (or at the end, for runs without decisions).
    pub fn initial_gap(&self) -> f64 {
        self.gap_timeline.first().map_or(1.0, |&(_, g)| g)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BnbError {
    #[error("POLICY_RANGE: policy returned index {index} for {count} candidates")]
    PolicyRange { index: usize, count: usize },
    #[error("LP_ITERATION_LIMIT at node {node}")]
    LpIterationLimit { node: usize },
    #[error("POLICY_ERROR: {0}")]
    Policy(String),
    #[error(transparent)]
    Lp(#[from] lp::LpError),
    #[error(transparent)]
    Features(#[from] features::FeatureError),
}

/// A fractional integer variable at the current node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub var: usize,
    pub value: f64,
    /// `x* - floor(x*)`.
    pub frac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChildEval {
    Infeasible,
    Bound(f64),
}

impl ChildEval {
    /// Bound improvement over `parent`; infeasible children get [`INFEASIBLE_GAIN`].
    pub fn gain(self, parent: f64) -> f64 {
        match self {
            ChildEval::Infeasible => INFEASIBLE_GAIN,
            ChildEval::Bound(b) => (b - parent).max(0.0),
        }
    }
}

/// What a policy may inspect, and the strong-branching oracle.
pub struct DecisionContext<'a> {
    pub candidates: &'a [Candidate],
    pub pseudocosts: &'a PseudocostTable,
    pub node_bound: f64,
    pub depth: usize,
    instance: &'a ValidInstance,
    rows: &'a LeRows,
    lower: &'a [f64],
    upper: &'a [f64],
    lp_limits: LpLimits,
    node_id: usize,
    strong_lps: &'a mut usize,
}

impl<'a> DecisionContext<'a> {
    /// Solves both child LPs of candidate `index` without creating nodes.
    pub fn strong_branch(&mut self, index: usize) -> Result<(ChildEval, ChildEval), BnbError> {
        let c = self.candidates[index];
        let mut lower = self.lower.to_vec();
        let mut upper = self.upper.to_vec();
        let mut eval = |lower: &[f64], upper: &[f64]| -> Result<ChildEval, BnbError> {
            *self.strong_lps += 1;
            let p = LpProblem {
                objective: &self.instance.objective,
                rows: self.rows,
                lower,
                upper,
            };
            let out = lp::solve_lp(&p, self.lp_limits)?;
            match out.status {
                LpStatus::Optimal => Ok(ChildEval::Bound(out.objective_value)),
                LpStatus::Infeasible => Ok(ChildEval::Infeasible),
                LpStatus::Unbounded => Ok(ChildEval::Bound(f64::NEG_INFINITY)),
                LpStatus::IterationLimit => Err(BnbError::LpIterationLimit { node: self.node_id }),
            }
        };
        upper[c.var] = c.value.floor();
        let down = eval(&lower, &upper)?;
        upper[c.var] = self.upper[c.var];
        lower[c.var] = c.value.ceil();
        let up = eval(&lower, &upper)?;
        Ok((down, up))
    }
}

/// Realized outcome of one branching, passed to [`BranchingPolicy::observe`].
#[derive(Debug, Clone, PartialEq)]
pub struct BranchOutcome {
    pub var: usize,
    pub parent_bound: f64,
    pub down: ChildEval,
    pub up: ChildEval,
}

/// Chooses one candidate at each decision point.
pub trait BranchingPolicy {
    fn name(&self) -> String;

    /// Returns an index into `ctx.candidates` (equivalently, an unpadded row of `state`).
    fn decide(
        &mut self,
        state: &StateFeatures,
        ctx: &mut DecisionContext<'_>,
    ) -> Result<usize, BnbError>;

    fn observe(&mut self, _outcome: &BranchOutcome) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapKey {
    bound: f64,
    id: usize,
}

impl Eq for HeapKey {}

impl Ord for HeapKey {
    // Reversed: BinaryHeap is a max-heap, we want the smallest (bound, id).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Running statistics read by the tree featurizer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchHistory {
    pub pruned_bound: usize,
    pub pruned_infeasible: usize,
    pub fathomed_integral: usize,
    pub depth_buckets: [usize; 3],
    pub gain_sum: f64,
    pub gain_sumsq: f64,
    pub gain_count: usize,
    pub both_children_fathomed: usize,
    pub branched_var_counts: Vec<usize>,
    pub last_gain_log_ratio: f64,
    pub node_lp_iterations: usize,
    pub node_lps: usize,
    pub last_node_iterations: usize,
    pub child_lps: usize,
    pub child_infeasible: usize,
    pub bound_change_sum: f64,
    pub bound_change_count: usize,
    pub iteration_limit_hits: usize,
}

struct OpenData {
    lower: Vec<f64>,
    upper: Vec<f64>,
    basis: Vec<BasisStatus>,
    plunge: usize,
}

enum Solved {
    Infeasible,
    Unbounded,
    Optimal {
        bound: f64,
        solution: Vec<f64>,
        basis: Vec<BasisStatus>,
    },
}

struct Engine<'a> {
    inst: &'a ValidInstance,
    cfg: &'a RunConfig,
    rows: LeRows,
    columns: ColumnStats,
    nodes: Vec<NodeRecord>,
    open_data: Vec<Option<OpenData>>,
    heap: BinaryHeap<HeapKey>,
    pseudo: PseudocostTable,
    history: SearchHistory,
    primal: f64,
    incumbent: Option<Vec<f64>>,
    nodes_explored: usize,
    lp_iterations: usize,
    strong_lps: usize,
    max_depth: usize,
    decisions: usize,
    pdi: PdiAccumulator,
    started: Instant,
    events: Vec<DecisionEvent>,
    last_selected_bound: Option<f64>,
    last_branched: Option<usize>,
    prev_gap: Option<f64>,
    root_bound: f64,
}

impl<'a> Engine<'a> {
    fn clock(&self) -> f64 {
        match self.cfg.clock {
            ClockMode::Decisions => self.decisions as f64,
            ClockMode::WallClock => self.started.elapsed().as_secs_f64(),
        }
    }

    fn tau(&self) -> f64 {
        let t = match self.cfg.clock {
            ClockMode::Decisions => self.decisions as f64 / self.cfg.decision_budget.max(1) as f64,
            ClockMode::WallClock => {
                self.started.elapsed().as_secs_f64() / self.cfg.time_budget.max(1e-12)
            }
        };
        t.clamp(0.0, 1.0)
    }

    fn dual_bound(&self) -> f64 {
        match self.heap.peek() {
            Some(k) => k.bound.min(self.primal),
            None => self.primal,
        }
    }

    fn solve_node(
        &mut self,
        lower: &[f64],
        upper: &[f64],
        node: usize,
    ) -> Result<Solved, BnbError> {
        let p = LpProblem {
            objective: &self.inst.objective,
            rows: &self.rows,
            lower,
            upper,
        };
        let out = lp::solve_lp(&p, self.cfg.lp_limits)?;
        self.nodes_explored += 1;
        self.lp_iterations += out.iterations;
        self.history.node_lps += 1;
        self.history.node_lp_iterations += out.iterations;
        self.history.last_node_iterations = out.iterations;
        match out.status {
            LpStatus::Optimal => Ok(Solved::Optimal {
                bound: out.objective_value,
                solution: out.solution,
                basis: out.basis,
            }),
            LpStatus::Infeasible => Ok(Solved::Infeasible),
            LpStatus::Unbounded => Ok(Solved::Unbounded),
            LpStatus::IterationLimit => {
                self.history.iteration_limit_hits += 1;
                Err(BnbError::LpIterationLimit { node })
            }
        }
    }

    fn is_integral(&self, x: &[f64]) -> bool {
        (0..self.inst.num_vars)
            .filter(|&j| self.inst.is_integer[j])
            .all(|j| (x[j] - x[j].round()).abs() <= self.cfg.integrality_tol)
    }

    fn candidates(&self, x: &[f64]) -> Vec<Candidate> {
        (0..self.inst.num_vars)
            .filter(|&j| self.inst.is_integer[j])
            .filter_map(|j| {
                let v = x[j];
                ((v - v.round()).abs() > self.cfg.integrality_tol).then(|| Candidate {
                    var: j,
                    value: v,
                    frac: v - v.floor(),
                })
            })
            .collect()
    }

    /// Files a freshly solved node as pruned, fathomed or open.
    fn classify(
        &mut self,
        id: usize,
        solved: Solved,
        lower: Vec<f64>,
        upper: Vec<f64>,
        plunge: usize,
    ) {
        match solved {
            Solved::Infeasible | Solved::Unbounded => {
                self.nodes[id].status = NodeStatus::PrunedInfeasible;
                self.nodes[id].lp_bound = f64::INFINITY;
                self.history.pruned_infeasible += 1;
            }
            Solved::Optimal {
                bound,
                solution,
                basis,
            } => {
                self.nodes[id].lp_bound = bound;
                if bound >= self.primal - PRUNE_TOL {
                    self.nodes[id].status = NodeStatus::PrunedBound;
                    self.history.pruned_bound += 1;
                } else if self.is_integral(&solution) {
                    self.nodes[id].status = NodeStatus::FathomedIntegral;
                    self.history.fathomed_integral += 1;
                    if self.cfg.cutoff.is_none() && bound < self.primal {
                        self.primal = bound;
                        self.incumbent = Some(solution);
                    }
                } else {
                    self.nodes[id].status = NodeStatus::Open;
                    self.nodes[id].lp_solution = Some(solution);
                    self.open_data[id] = Some(OpenData {
                        lower,
                        upper,
                        basis,
                        plunge,
                    });
                    self.heap.push(HeapKey { bound, id });
                }
            }
        }
    }

    fn new_node(
        &mut self,
        parent: Option<usize>,
        side: ChildSide,
        changes: Vec<BoundChange>,
    ) -> usize {
        let id = self.nodes.len();
        let depth = parent.map_or(0, |p| self.nodes[p].depth + 1);
        self.max_depth = self.max_depth.max(depth);
        self.nodes.push(NodeRecord {
            id,
            parent_id: parent,
            depth,
            bound_changes: changes,
            lp_bound: f64::NEG_INFINITY,
            lp_solution: None,
            status: NodeStatus::Open,
            child_side: side,
        });
        self.open_data.push(None);
        id
    }

    fn path_vars(&self, mut id: usize) -> Vec<usize> {
        let mut vars = Vec::new();
        while let Some(parent) = self.nodes[id].parent_id {
            vars.extend(self.nodes[id].bound_changes.iter().map(|c| c.var));
            id = parent;
        }
        vars
    }

    /// `in_hand` counts a popped node that is still part of the frontier.
    fn observation(&self, gap: f64, in_hand: usize) -> Observation {
        Observation {
            nodes_explored: self.nodes_explored,
            gap,
            pdi: self.pdi.pdi,
            tau: self.tau(),
            open: self.heap.len() + in_hand,
            decisions: self.decisions,
        }
    }

    fn snapshot_state(
        &self,
        id: usize,
        data: &OpenData,
        cands: &[Candidate],
        gap: f64,
        dual: f64,
    ) -> Result<StateFeatures, BnbError> {
        let node = &self.nodes[id];
        let solution = node
            .lp_solution
            .as_deref()
            .expect("open node keeps its solution");
        let path = self.path_vars(id);
        let mut path_counts = vec![0usize; self.inst.num_vars];
        for &v in &path {
            path_counts[v] += 1;
        }
        let open: Vec<(usize, f64)> = std::iter::once((node.depth, node.lp_bound))
            .chain(self.heap.iter().map(|k| (self.nodes[k.id].depth, k.bound)))
            .collect();
        let best_depth = self
            .heap
            .iter()
            .map(|k| (k.bound, k.id))
            .chain(std::iter::once((node.lp_bound, id)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map_or(0, |(_, i)| self.nodes[i].depth);
        let tree = TreeView {
            primal: self.primal,
            dual,
            gap,
            prev_gap: self.prev_gap,
            root_bound: self.root_bound,
            explored: self.nodes_explored,
            open: &open,
            max_depth: self.max_depth,
            best_bound_depth: best_depth,
            current_depth: node.depth,
            last_selected_bound: self.last_selected_bound,
            decisions: self.decisions,
            decision_budget: self.cfg.decision_budget,
            tau: self.tau(),
            pdi: self.pdi.pdi,
            pdi_reference: self.cfg.pdi_reference.unwrap_or(1.0),
            history: &self.history,
            path_vars: &path,
            pseudocosts: &self.pseudo,
            num_integer: self.inst.num_integer(),
        };
        let view = NodeView {
            depth: node.depth,
            lp_bound: node.lp_bound,
            solution,
            basis: &data.basis,
            lower: &data.lower,
            upper: &data.upper,
            child_side: node.child_side,
            plunge_depth: data.plunge,
            path_branch_counts: &path_counts,
        };
        let snap = SolverSnapshot {
            instance: self.inst,
            columns: &self.columns,
            node: view,
            candidates: cands,
            pseudocosts: &self.pseudo,
            tree,
        };
        Ok(features::extract(&snap)?)
    }
}

/// Runs branch-and-bound on `inst` with `policy` choosing branching variables.
pub fn run(
    inst: &ValidInstance,
    policy: &mut dyn BranchingPolicy,
    cfg: &RunConfig,
) -> Result<RunStats, BnbError> {
    let mut e = Engine {
        inst,
        cfg,
        rows: LeRows::from_instance(inst),
        columns: ColumnStats::new(inst),
        nodes: Vec::new(),
        open_data: Vec::new(),
        heap: BinaryHeap::new(),
        pseudo: PseudocostTable::new(inst.num_vars),
        history: SearchHistory {
            branched_var_counts: vec![0; inst.num_vars],
            ..Default::default()
        },
        primal: cfg.cutoff.unwrap_or(f64::INFINITY),
        incumbent: None,
        nodes_explored: 0,
        lp_iterations: 0,
        strong_lps: 0,
        max_depth: 0,
        decisions: 0,
        pdi: PdiAccumulator::default(),
        started: Instant::now(),
        events: Vec::new(),
        last_selected_bound: None,
        last_branched: None,
        prev_gap: None,
        root_bound: f64::NEG_INFINITY,
    };

    let root = e.new_node(None, ChildSide::Root, Vec::new());
    let lower = inst.lower_bounds.clone();
    let upper = inst.upper_bounds.clone();
    let solved = e.solve_node(&lower, &upper, root)?;
    let early = match &solved {
        Solved::Infeasible => Some(RunStatus::Infeasible),
        Solved::Unbounded => Some(RunStatus::Unbounded),
        Solved::Optimal { bound, .. } => {
            e.root_bound = *bound;
            None
        }
    };
    if let Some(status) = early {
        e.classify(root, solved, lower, upper, 0);
        e.pdi.observe(e.clock(), 1.0);
        return Ok(finish(e, status, StopReason::Completed, None));
    }
    e.classify(root, solved, lower, upper, 0);

    let mut pending_state = None;
    let stop = loop {
        let dual = e.dual_bound();
        let gap = compute_gap(e.primal, dual);
        let clock = e.clock();
        if e.pdi.timeline.last().map_or(true, |&(c, _)| c != clock) {
            e.pdi.observe(clock, gap);
        } else if let Some(last) = e.pdi.timeline.last_mut() {
            last.1 = gap;
        }
        if e.heap.is_empty() {
            break StopReason::Completed;
        }
        if e.nodes_explored >= cfg.node_budget {
            break StopReason::NodeBudget;
        }
        if e.decisions >= cfg.decision_budget {
            break StopReason::DecisionBudget;
        }
        if cfg.clock == ClockMode::WallClock && e.started.elapsed().as_secs_f64() >= cfg.time_budget
        {
            break StopReason::TimeBudget;
        }

        let key = e.heap.pop().expect("non-empty");
        let id = key.id;
        if key.bound >= e.primal - PRUNE_TOL {
            // Became prunable after an incumbent update.
            e.nodes[id].status = NodeStatus::PrunedBound;
            e.nodes[id].lp_solution = None;
            e.open_data[id] = None;
            e.history.pruned_bound += 1;
            continue;
        }
        let data = e.open_data[id].take().expect("open node data");
        let solution = e.nodes[id].lp_solution.clone().expect("open node solution");
        let cands = e.candidates(&solution);
        let state = e.snapshot_state(id, &data, &cands, gap, dual)?;

        if cfg.truncate_after.map_or(false, |k| e.decisions >= k) {
            e.open_data[id] = Some(data);
            e.heap.push(key);
            pending_state = Some(state);
            break StopReason::Truncated;
        }

        let before = e.observation(gap, 1);
        let action = {
            let mut ctx = DecisionContext {
                candidates: &cands,
                pseudocosts: &e.pseudo,
                node_bound: key.bound,
                depth: e.nodes[id].depth,
                instance: inst,
                rows: &e.rows,
                lower: &data.lower,
                upper: &data.upper,
                lp_limits: cfg.lp_limits,
                node_id: id,
                strong_lps: &mut e.strong_lps,
            };
            policy.decide(&state, &mut ctx)?
        };
        if action >= cands.len() {
            return Err(BnbError::PolicyRange {
                index: action,
                count: cands.len(),
            });
        }
        let cand = cands[action];
        let depth = e.nodes[id].depth;
        e.nodes[id].status = NodeStatus::Branched;
        e.nodes[id].lp_solution = None;
        let plunge = if e
            .last_branched
            .map_or(false, |p| e.nodes[id].parent_id == Some(p))
        {
            data.plunge + 1
        } else {
            0
        };

        let mut evals = [ChildEval::Infeasible; 2];
        let mut gains = [None, None];
        let mut still_open = 0;
        for (k, dir) in [BranchDirection::Down, BranchDirection::Up]
            .into_iter()
            .enumerate()
        {
            let mut lower = data.lower.clone();
            let mut upper = data.upper.clone();
            let (change, side) = match dir {
                BranchDirection::Down => {
                    upper[cand.var] = cand.value.floor();
                    (
                        BoundChange {
                            var: cand.var,
                            side: BoundSide::Upper,
                            value: upper[cand.var],
                        },
                        ChildSide::Left,
                    )
                }
                BranchDirection::Up => {
                    lower[cand.var] = cand.value.ceil();
                    (
                        BoundChange {
                            var: cand.var,
                            side: BoundSide::Lower,
                            value: lower[cand.var],
                        },
                        ChildSide::Right,
                    )
                }
            };
            let child = e.new_node(Some(id), side, vec![change]);
            let solved = e.solve_node(&lower, &upper, child)?;
            e.history.child_lps += 1;
            match &solved {
                Solved::Optimal { bound, .. } => {
                    evals[k] = ChildEval::Bound(*bound);
                    let dist = match dir {
                        BranchDirection::Down => cand.frac,
                        BranchDirection::Up => 1.0 - cand.frac,
                    };
                    let change = bound - key.bound;
                    let per_unit = change / dist.max(1e-6);
                    e.pseudo.record(cand.var, dir, per_unit);
                    e.history.gain_sum += per_unit.max(0.0);
                    e.history.gain_sumsq += per_unit.max(0.0).powi(2);
                    e.history.gain_count += 1;
                    e.history.bound_change_sum += change;
                    e.history.bound_change_count += 1;
                    gains[k] = Some(per_unit.max(0.0));
                }
                _ => e.history.child_infeasible += 1,
            }
            e.classify(child, solved, lower, upper, plunge);
            if e.nodes[child].status == NodeStatus::Open {
                still_open += 1;
            }
        }
        if still_open == 0 {
            e.history.both_children_fathomed += 1;
        }
        e.history.depth_buckets[match depth {
            0..=4 => 0,
            5..=14 => 1,
            _ => 2,
        }] += 1;
        e.history.branched_var_counts[cand.var] += 1;
        e.history.last_gain_log_ratio = match gains {
            [Some(d), Some(u)] => ((d + 1e-6) / (u + 1e-6)).ln(),
            _ => 0.0,
        };
        policy.observe(&BranchOutcome {
            var: cand.var,
            parent_bound: key.bound,
            down: evals[0],
            up: evals[1],
        });

        e.events.push(DecisionEvent {
            decision: e.decisions,
            node_id: id,
            depth,
            num_candidates: cands.len(),
            action,
            var: cand.var,
            clock: e.clock(),
            before,
        });
        e.decisions += 1;
        e.prev_gap = Some(gap);
        e.last_selected_bound = Some(key.bound);
        e.last_branched = Some(id);
    };

    let status = match stop {
        StopReason::Completed => {
            if e.primal.is_finite() {
                RunStatus::Optimal
            } else {
                RunStatus::Infeasible
            }
        }
        _ => RunStatus::TimeLimit,
    };
    Ok(finish(e, status, stop, pending_state))
}

fn finish(
    e: Engine<'_>,
    status: RunStatus,
    stop: StopReason,
    pending_state: Option<StateFeatures>,
) -> RunStats {
    let dual = match status {
        RunStatus::Optimal => e.primal,
        RunStatus::Infeasible => f64::INFINITY,
        RunStatus::Unbounded => f64::NEG_INFINITY,
        RunStatus::TimeLimit => e.dual_bound(),
    };
    let final_gap = e.pdi.timeline.last().map_or(1.0, |&(_, g)| g);
    let final_observation = e.observation(final_gap, 0);
    let clock = e.clock();
    let mut tree = e.nodes;
    for n in tree.iter_mut() {
        if n.status != NodeStatus::Open {
            n.lp_solution = None;
        }
    }
    RunStats {
        nodes_explored: e.nodes_explored,
        status,
        stop_reason: stop,
        gap_timeline: e.pdi.timeline,
        pdi: e.pdi.pdi,
        decisions: e.decisions,
        wall_or_budget_clock: clock,
        primal_bound: e.primal,
        dual_bound: dual,
        root_bound: e.root_bound,
        incumbent: e.incumbent,
        lp_iterations: e.lp_iterations,
        strong_branch_lps: e.strong_lps,
        max_depth: e.max_depth,
        events: e.events,
        final_observation,
        pending_state,
        tree: if e.cfg.keep_tree { tree } else { Vec::new() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{validate_instance, MilpInstance, RowSense};

    pub(crate) fn knapsack() -> ValidInstance {
        let mut inst = MilpInstance::new("knap2", 2);
        inst.objective = vec![-3.0, -4.0];
        inst.upper_bounds = vec![1.0, 1.0];
        inst.is_integer = vec![true, true];
        inst.add_row(&[(0, 2.0), (1, 3.0)], RowSense::Le, 4.0);
        validate_instance(&inst).unwrap()
    }

    fn most_fractional() -> BaselinePolicy {
        BaselinePolicy::new(PolicyKind::MostFractional, 0)
    }

    #[test]
    fn hand_trace_with_cutoff() {
        let cfg = RunConfig {
            cutoff: Some(-4.0),
            keep_tree: true,
            ..Default::default()
        };
        let stats = run(&knapsack(), &mut most_fractional(), &cfg).unwrap();
        assert_eq!(stats.status, RunStatus::Optimal);
        assert_eq!(stats.nodes_explored, 5);
        assert_eq!(stats.decisions, 2);
        let bounds: Vec<f64> = stats.tree.iter().map(|n| n.lp_bound).collect();
        assert!((bounds[0] + 17.0 / 3.0).abs() < 1e-9);
        assert!((bounds[1] + 3.0).abs() < 1e-9);
        assert!((bounds[2] + 5.5).abs() < 1e-9);
        assert!((bounds[3] + 4.0).abs() < 1e-9);
        assert_eq!(stats.tree[1].status, NodeStatus::PrunedBound);
        assert_eq!(stats.tree[2].status, NodeStatus::Branched);
        assert_eq!(stats.tree[3].status, NodeStatus::PrunedBound);
        assert_eq!(stats.tree[4].status, NodeStatus::PrunedInfeasible);
    }

    #[test]
    fn node_budget_one() {
        let cfg = RunConfig {
            cutoff: Some(-4.0),
            node_budget: 1,
            ..Default::default()
        };
        let stats = run(&knapsack(), &mut most_fractional(), &cfg).unwrap();
        assert_eq!(stats.status, RunStatus::TimeLimit);
        assert_eq!(stats.nodes_explored, 1);
    }

    #[test]
    fn integral_root() {
        let mut inst = MilpInstance::new("int", 2);
        inst.objective = vec![1.0, 1.0];
        inst.upper_bounds = vec![1.0, 1.0];
        inst.is_integer = vec![true, true];
        inst.add_row(&[(0, 1.0), (1, 1.0)], RowSense::Ge, 1.0);
        let v = validate_instance(&inst).unwrap();
        let stats = run(&v, &mut most_fractional(), &RunConfig::default()).unwrap();
        assert_eq!(stats.status, RunStatus::Optimal);
        assert_eq!((stats.nodes_explored, stats.decisions), (1, 0));
        assert_eq!(stats.primal_bound, 1.0);
        assert_eq!(stats.pdi, 0.0);
    }

    #[test]
    fn no_cutoff_finds_optimum() {
        let stats = run(&knapsack(), &mut most_fractional(), &RunConfig::default()).unwrap();
        assert_eq!(stats.status, RunStatus::Optimal);
        assert!((stats.primal_bound + 4.0).abs() < 1e-9);
        assert_eq!(stats.incumbent.as_deref(), Some(&[0.0, 1.0][..]));
    }

    #[test]
    fn infeasible_root() {
        let mut inst = MilpInstance::new("inf", 1);
        inst.upper_bounds = vec![1.0];
        inst.is_integer = vec![true];
        inst.add_row(&[(0, 1.0)], RowSense::Ge, 2.0);
        let v = validate_instance(&inst).unwrap();
        let stats = run(&v, &mut most_fractional(), &RunConfig::default()).unwrap();
        assert_eq!(stats.status, RunStatus::Infeasible);
    }

    #[test]
    fn unbounded_root() {
        let mut inst = MilpInstance::new("unb", 2);
        inst.objective = vec![-1.0, 0.0];
        inst.is_integer = vec![true, false];
        inst.add_row(&[(0, 1.0), (1, -1.0)], RowSense::Le, 0.5);
        let v = validate_instance(&inst).unwrap();
        let stats = run(&v, &mut most_fractional(), &RunConfig::default()).unwrap();
        assert_eq!(stats.status, RunStatus::Unbounded);
    }

    struct Bad;
    impl BranchingPolicy for Bad {
        fn name(&self) -> String {
            "bad".into()
        }
        fn decide(
            &mut self,
            _: &StateFeatures,
            ctx: &mut DecisionContext<'_>,
        ) -> Result<usize, BnbError> {
            Ok(ctx.candidates.len())
        }
    }

    #[test]
    fn out_of_range_policy_aborts() {
        let err = run(&knapsack(), &mut Bad, &RunConfig::default()).unwrap_err();
        assert_eq!(err, BnbError::PolicyRange { index: 1, count: 1 });
    }

    #[test]
    fn truncation_leaves_pending_state() {
        let cfg = RunConfig {
            cutoff: Some(-4.0),
            truncate_after: Some(1),
            ..Default::default()
        };
        let stats = run(&knapsack(), &mut most_fractional(), &cfg).unwrap();
        assert_eq!(stats.stop_reason, StopReason::Truncated);
        assert_eq!(stats.decisions, 1);
        assert_eq!(
            stats.pending_state.as_ref().map(|s| s.num_candidates()),
            Some(1)
        );
    }

    #[test]
    fn event_log_format() {
        let cfg = RunConfig {
            cutoff: Some(-4.0),
            ..Default::default()
        };
        let stats = run(&knapsack(), &mut most_fractional(), &cfg).unwrap();
        let log = format_event_log(&stats.events);
        assert_eq!(
            log,
            "decision 0 node 0 depth 0 ncands 1 action 0 clock 0\n\
             decision 1 node 2 depth 1 ncands 1 action 0 clock 1\n"
        );
    }

    #[test]
    fn pdi_matches_timeline() {
        let cfg = RunConfig {
            cutoff: Some(-4.0),
            ..Default::default()
        };
        let stats = run(&knapsack(), &mut most_fractional(), &cfg).unwrap();
        // Gap at the root: |-4 + 17/3| / (17/3); after one decision: 1.5 / 5.5.
        let g0 = (17.0 / 3.0 - 4.0) / (17.0 / 3.0);
        let g1 = 1.5 / 5.5;
        assert!((stats.pdi - (g0 + g1)).abs() < 1e-12);
        assert_eq!(stats.pdi, timeline_pdi(&stats.gap_timeline));
        assert_eq!(stats.gap_timeline.last().unwrap().1, 0.0);
    }
}
