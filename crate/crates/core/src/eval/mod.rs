//! Metrics, statistical tests, tuning and reports.

mod report;
mod stats;
mod tune;

pub use report::{build_report, Report, WinLine};
pub use stats::{
    average_ranks, format_p, friedman, mean_ranks, wilcoxon_exact_less, wilcoxon_normal_less,
    wilcoxon_signed_rank, FriedmanResult, WilcoxonResult, WILCOXON_EXACT_MAX, WILCOXON_MIN_PAIRS,
};
pub use tune::{
    difficulty_quartiles, nested_cv_tune, stratified_folds, MedianPruner, SearchSpace,
    TrialObjective, TrialRecord, TuneOutcome, TunedConfig,
};

use crate::bnb::{run, BnbError, PolicyKind, RunConfig, RunStatus};
use crate::milp::ValidInstance;
use crate::net::PolicyParameters;
use crate::ppo::NetPolicy;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::Path;

pub const NODE_SHIFT: f64 = 100.0;
pub const PDI_SHIFT: f64 = 0.0;
/// PDI values are floored here before the log, since the shift is 0.
pub const PDI_FLOOR: f64 = 1e-9;
pub const RESULTS_HEADER: [&str; 7] = [
    "instance", "seed", "policy", "nodes", "pdi", "status", "clock",
];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("EMPTY_INPUT")]
    EmptyInput,
    #[error("NONPOSITIVE_SHIFTED: {0} + shift <= 0")]
    NonpositiveShifted(f64),
    #[error("GRID_MISMATCH: {0}")]
    GridMismatch(String),
    #[error("DEGENERATE: {0}")]
    Degenerate(String),
    #[error("TOO_FEW_PAIRS: {0} non-zero differences")]
    TooFewPairs(usize),
    #[error("INSUFFICIENT_DATA: {0}")]
    InsufficientData(String),
    #[error("MALFORMED_RESULTS: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Bnb(#[from] BnbError),
    #[error("{0}")]
    Other(String),
}

/// Shifted geometric mean `exp(mean(ln(x + S))) - S`.
pub fn sgm(values: &[f64], shift: f64) -> Result<f64, EvalError> {
    let first = *values.first().ok_or(EvalError::EmptyInput)?;
    if let Some(&bad) = values.iter().find(|&&x| !(x + shift > 0.0)) {
        return Err(EvalError::NonpositiveShifted(bad));
    }
    if values.iter().all(|&x| x == first) {
        return Ok(first);
    }
    let mean_log = values.iter().map(|x| (x + shift).ln()).sum::<f64>() / values.len() as f64;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| {
            (l.min(x), h.max(x))
        });
    Ok((mean_log.exp() - shift).clamp(lo, hi))
}

pub fn sgm_nodes(values: &[f64]) -> Result<f64, EvalError> {
    sgm(values, NODE_SHIFT)
}

pub fn sgm_pdi(values: &[f64]) -> Result<f64, EvalError> {
    let floored: Vec<f64> = values.iter().map(|v| v.max(PDI_FLOOR)).collect();
    sgm(&floored, PDI_SHIFT)
}

/// `0.6 SGM(nodes) + 0.4 SGM(PDI)`; PDI alone when no run completed.
pub fn composite_score(completed_nodes: &[f64], pdis: &[f64]) -> Result<f64, EvalError> {
    let p = sgm_pdi(pdis)?;
    if completed_nodes.is_empty() {
        return Ok(p);
    }
    Ok(0.6 * sgm_nodes(completed_nodes)? + 0.4 * p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub instance: String,
    pub seed: u64,
    pub policy: String,
    pub nodes: u64,
    pub pdi: f64,
    pub status: RunStatus,
    pub clock: f64,
}

impl ResultRow {
    pub fn completed(&self) -> bool {
        self.status != RunStatus::TimeLimit
    }
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| (&a.instance, a.seed, &a.policy).cmp(&(&b.instance, b.seed, &b.policy)));
}

pub fn format_results(rows: &[ResultRow]) -> String {
    let mut s = RESULTS_HEADER.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{:.10e},{},{:.10e}\n",
            r.instance, r.seed, r.policy, r.nodes, r.pdi, r.status, r.clock
        ));
    }
    s
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<(), EvalError> {
    std::fs::write(path, format_results(rows))?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, EvalError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(EvalError::Malformed(format!(
            "unexpected header {header:?}"
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| EvalError::Malformed(format!("row {}: bad {what}", i + 2));
        rows.push(ResultRow {
            instance: rec[0].to_string(),
            seed: rec[1].parse().map_err(|_| bad("seed"))?,
            policy: rec[2].to_string(),
            nodes: rec[3].parse().map_err(|_| bad("nodes"))?,
            pdi: rec[4].parse().map_err(|_| bad("pdi"))?,
            status: RunStatus::parse(&rec[5]).ok_or_else(|| bad("status"))?,
            clock: rec[6].parse().map_err(|_| bad("clock"))?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Nodes,
    Pdi,
}

impl Metric {
    pub fn sgm_of(self, rows: &[&ResultRow]) -> Result<f64, EvalError> {
        match self {
            Metric::Nodes => sgm_nodes(&rows.iter().map(|r| r.nodes as f64).collect::<Vec<_>>()),
            Metric::Pdi => sgm_pdi(&rows.iter().map(|r| r.pdi).collect::<Vec<_>>()),
        }
    }
}

/// Rows of one policy grouped by instance, each group sorted by seed.
pub fn by_instance<'a>(
    rows: &'a [ResultRow],
    policy: &str,
) -> BTreeMap<&'a str, Vec<&'a ResultRow>> {
    let mut m: BTreeMap<&str, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.policy == policy) {
        m.entry(r.instance.as_str()).or_default().push(r);
    }
    m.values_mut().for_each(|v| v.sort_by_key(|r| r.seed));
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceComparison {
    pub instance: String,
    pub metric: Metric,
    pub a: f64,
    pub b: f64,
    pub win: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WinTable {
    pub per_instance: Vec<InstanceComparison>,
    pub fraction: f64,
}

fn check_grid(
    a: &BTreeMap<&str, Vec<&ResultRow>>,
    b: &BTreeMap<&str, Vec<&ResultRow>>,
) -> Result<(), EvalError> {
    let keys = |m: &BTreeMap<&str, Vec<&ResultRow>>| -> Vec<(String, u64)> {
        m.iter()
            .flat_map(|(k, v)| v.iter().map(move |r| (k.to_string(), r.seed)))
            .collect()
    };
    if keys(a) != keys(b) {
        return Err(EvalError::GridMismatch(
            "policies cover different (instance, seed) grids".into(),
        ));
    }
    if a.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

fn per_instance_wins(
    a: &BTreeMap<&str, Vec<&ResultRow>>,
    b: &BTreeMap<&str, Vec<&ResultRow>>,
    pick: impl Fn(&[&ResultRow], &[&ResultRow]) -> Metric,
) -> Result<WinTable, EvalError> {
    check_grid(a, b)?;
    let mut per_instance = Vec::with_capacity(a.len());
    for (inst, ra) in a {
        let rb = &b[inst];
        let metric = pick(ra, rb);
        let (sa, sb) = (metric.sgm_of(ra)?, metric.sgm_of(rb)?);
        per_instance.push(InstanceComparison {
            instance: inst.to_string(),
            metric,
            a: sa,
            b: sb,
            win: sa < sb,
        });
    }
    let wins = per_instance.iter().filter(|c| c.win).count();
    Ok(WinTable {
        fraction: wins as f64 / per_instance.len() as f64,
        per_instance,
    })
}

/// Share of instances where policy `a`'s per-instance SGM is strictly below `b`'s.
pub fn win_rate(
    rows: &[ResultRow],
    a: &str,
    b: &str,
    metric: Metric,
) -> Result<WinTable, EvalError> {
    per_instance_wins(&by_instance(rows, a), &by_instance(rows, b), |_, _| metric)
}

/// Like [`win_rate`], comparing node counts where every run of both policies
/// completed and PDI elsewhere.
pub fn routed_win_rate(rows: &[ResultRow], a: &str, b: &str) -> Result<WinTable, EvalError> {
    per_instance_wins(&by_instance(rows, a), &by_instance(rows, b), |ra, rb| {
        if ra.iter().chain(rb).all(|r| r.completed()) {
            Metric::Nodes
        } else {
            Metric::Pdi
        }
    })
}

/// One `(instance, seed)` evaluation run.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub name: String,
    pub seed: u64,
    pub instance: ValidInstance,
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub enum EvalPolicy<'p> {
    Baseline(PolicyKind),
    Learned(&'p PolicyParameters),
}

impl EvalPolicy<'_> {
    pub fn name(&self) -> String {
        match self {
            EvalPolicy::Baseline(k) => k.as_str().to_string(),
            EvalPolicy::Learned(_) => "TGPPO".to_string(),
        }
    }
}

fn eval_one(
    item: &EvalItem,
    policy: EvalPolicy<'_>,
    run_cfg: &RunConfig,
) -> Result<ResultRow, EvalError> {
    let cfg = RunConfig {
        cutoff: item.cutoff,
        seed: item.seed,
        truncate_after: None,
        ..run_cfg.clone()
    };
    let stats = match policy {
        EvalPolicy::Baseline(k) => run(&item.instance, &mut k.build(item.seed), &cfg)?,
        EvalPolicy::Learned(p) => run(&item.instance, &mut NetPolicy::greedy(p), &cfg)?,
    };
    Ok(ResultRow {
        instance: item.name.clone(),
        seed: item.seed,
        policy: policy.name(),
        nodes: stats.nodes_explored as u64,
        pdi: stats.pdi,
        status: stats.status,
        clock: stats.wall_or_budget_clock,
    })
}

/// Runs every policy on every item across `workers` threads. Rows come back
/// sorted by `(instance, seed, policy)` regardless of scheduling.
pub fn evaluate(
    items: &[EvalItem],
    policies: &[EvalPolicy<'_>],
    run_cfg: &RunConfig,
    workers: usize,
) -> Result<Vec<ResultRow>, EvalError> {
    let jobs: Vec<(usize, usize)> = (0..items.len())
        .flat_map(|i| (0..policies.len()).map(move |p| (i, p)))
        .collect();
    let work = || -> Result<Vec<ResultRow>, EvalError> {
        jobs.par_iter()
            .map(|&(i, p)| eval_one(&items[i], policies[p], run_cfg))
            .collect()
    };
    let mut rows = if workers <= 1 {
        jobs.iter()
            .map(|&(i, p)| eval_one(&items[i], policies[p], run_cfg))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| EvalError::Other(e.to_string()))?
            .install(work)?
    };
    sort_rows(&mut rows);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(inst: &str, seed: u64, policy: &str, nodes: u64, pdi: f64) -> ResultRow {
        ResultRow {
            instance: inst.into(),
            seed,
            policy: policy.into(),
            nodes,
            pdi,
            status: RunStatus::Optimal,
            clock: 1.0,
        }
    }

    #[test]
    fn sgm_examples() {
        assert_eq!(sgm(&[37.0], 100.0).unwrap(), 37.0);
        assert!((sgm(&[100.0, 400.0], 100.0).unwrap() - 216.2278).abs() < 1e-3);
        assert_eq!(sgm(&[0.0, 0.0], 100.0).unwrap(), 0.0);
        assert!(matches!(sgm(&[], 100.0), Err(EvalError::EmptyInput)));
        assert!(matches!(
            sgm(&[0.0, 1.0], 0.0),
            Err(EvalError::NonpositiveShifted(_))
        ));
    }

    #[test]
    fn composite_examples() {
        assert!((0.6 * 100.0 + 0.4 * 50.0 - 80.0f64).abs() < 1e-12);
        assert!((composite_score(&[100.0], &[50.0]).unwrap() - 80.0).abs() < 1e-12);
        assert_eq!(composite_score(&[], &[7.0]).unwrap(), 7.0);
        assert_eq!(sgm_pdi(&[0.0, 0.0]).unwrap(), PDI_FLOOR);
    }

    #[test]
    fn win_rate_examples() {
        let mut rows = Vec::new();
        for (i, (a, b)) in [(10, 12), (20, 18), (30, 40)].into_iter().enumerate() {
            rows.push(row(&format!("i{i}"), 0, "A", a, 1.0));
            rows.push(row(&format!("i{i}"), 0, "B", b, 1.0));
        }
        let t = win_rate(&rows, "A", "B", Metric::Nodes).unwrap();
        assert!((t.fraction - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            win_rate(&rows, "A", "A", Metric::Nodes).unwrap().fraction,
            0.0
        );
        rows.pop();
        assert!(matches!(
            win_rate(&rows, "A", "B", Metric::Nodes),
            Err(EvalError::GridMismatch(_))
        ));
    }

    #[test]
    fn routing_uses_pdi_when_a_run_timed_out() {
        let mut rows = vec![row("x", 0, "A", 50, 3.0), row("x", 0, "B", 10, 9.0)];
        assert!(!routed_win_rate(&rows, "A", "B").unwrap().per_instance[0].win);
        rows[1].status = RunStatus::TimeLimit;
        let t = routed_win_rate(&rows, "A", "B").unwrap();
        assert_eq!(t.per_instance[0].metric, Metric::Pdi);
        assert!(t.per_instance[0].win);
    }

    #[test]
    fn results_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rows = vec![row("a", 0, "RANDOM", 3, 0.25), row("a", 1, "TGPPO", 1, 0.0)];
        write_results(&path, &rows).unwrap();
        assert_eq!(read_results(&path).unwrap(), rows);
    }
}
