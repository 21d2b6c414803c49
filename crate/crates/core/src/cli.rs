//! Command-line entry point: `generate`, `baseline`, `solve`, `train`,
//! `tune`, `eval` and `report`.

use crate::bnb::{run, PolicyKind, RunConfig};
use crate::config::{parse_seeds, CutoffMode, RunConfigFile};
use crate::eval::{
    build_report, composite_score, evaluate, nested_cv_tune, read_results, write_results,
    EvalError, EvalItem, EvalPolicy, SearchSpace, TrialObjective, TunedConfig,
};
use crate::milp::{Family, GeneratorParams};
use crate::net::{load_checkpoint, save_checkpoint, PolicyParameters};
use crate::pipeline::{
    acquire_baselines, augment, generate_dataset, load_dataset, read_instance, training_pool,
};
use crate::ppo::{train, write_train_log, NetPolicy, TrainingItem};
use crate::rewards::BaselineManifest;
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "tgbranch",
    version,
    about = "Learning to branch for mixed-integer linear programs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic instances to a directory.
    Generate(GenerateArgs),
    /// Run the reference baseline on every (instance, seed) and record it.
    Baseline(BaselineArgs),
    /// Solve one instance with one branching policy.
    Solve(SolveArgs),
    /// Train the branching policy with PPO.
    Train(TrainArgs),
    /// Nested cross-validated hyperparameter search.
    Tune(TuneArgs),
    /// Evaluate a checkpoint and the baseline policies.
    Eval(EvalArgs),
    /// Summarize a results CSV into win-rate and statistics tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "set_cover")]
    pub family: Family,
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    #[arg(long, default_value_t = 0.2)]
    pub density: f64,
    /// Smallest integer coefficient (costs, values, weights).
    #[arg(long = "coef-min", default_value_t = 1, allow_hyphen_values = true)]
    pub coef_min: i64,
    #[arg(long = "coef-max", default_value_t = 10, allow_hyphen_values = true)]
    pub coef_max: i64,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// Node budget per run.
    #[arg(long = "budget-nodes")]
    pub budget_nodes: Option<usize>,
    /// AUTO (known optimum), NONE or a number.
    #[arg(long)]
    pub cutoff: Option<CutoffMode>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "0..4", value_parser = seed_list)]
    pub seeds: SeedList,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// A baseline name or TGPPO (requires --checkpoint).
    #[arg(long, default_value = "relpscost_like")]
    pub policy: String,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "NONE", allow_hyphen_values = true)]
    pub cutoff: CutoffMode,
    #[arg(long = "budget-nodes", default_value_t = 100_000)]
    pub budget_nodes: usize,
    /// Print one line per branching decision.
    #[arg(long)]
    pub events: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Overrides the config's seed list.
    #[arg(long, value_parser = seed_list)]
    pub seeds: Option<SeedList>,
    /// Baseline manifest; missing entries are computed and appended.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 5)]
    pub outer: usize,
    #[arg(long, default_value_t = 2)]
    pub inner: usize,
    /// Training episodes per trial and fold.
    #[arg(long = "episodes-per-trial", default_value_t = 30)]
    pub episodes_per_trial: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `all`, `none` or a comma list of baseline names.
    #[arg(long, default_value = "all")]
    pub baselines: String,
    #[arg(long, default_value = "0..4", value_parser = seed_list)]
    pub seeds: SeedList,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// Policy compared against the others; defaults to TGPPO when present.
    #[arg(long)]
    pub focus: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

/// A parsed `--seeds` value, kept as one argument.
#[derive(Debug, Clone)]
pub struct SeedList(pub Vec<u64>);

fn seed_list(v: &str) -> Result<SeedList, String> {
    parse_seeds(v).map(SeedList)
}

type CmdResult = Result<(), String>;

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Parses `args` (including the program name) and runs the command; returns
/// the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let out = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Train(a) => cmd_train(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
    };
    match out {
        Ok(()) => EXIT_OK,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn cmd_generate(a: GenerateArgs) -> CmdResult {
    let params = GeneratorParams {
        family: a.family,
        rows: a.rows,
        cols: a.cols,
        density: a.density,
        coefficient_range: (a.coef_min, a.coef_max),
        seed: a.seed,
    };
    let paths = generate_dataset(&params, a.count, &a.out).map_err(s)?;
    println!("wrote {} instances to {}", paths.len(), a.out.display());
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<RunConfigFile, String> {
    path.map_or_else(|| Ok(RunConfigFile::default()), RunConfigFile::load)
}

fn run_config(cfg: &RunConfigFile, b: &BudgetArgs) -> RunConfig {
    let mut rc = cfg.run_config();
    if let Some(n) = b.budget_nodes {
        rc.node_budget = n;
        rc.decision_budget = n;
    }
    rc
}

fn items_for(data: &Path, seeds: &[u64], cutoff: CutoffMode) -> Result<Vec<EvalItem>, String> {
    let instances = load_dataset(data).map_err(s)?;
    augment(&instances, seeds, cutoff).map_err(s)
}

fn open_manifest(path: Option<&Path>) -> Result<BaselineManifest, String> {
    match path {
        Some(p) => BaselineManifest::open(p).map_err(s),
        None => Ok(BaselineManifest::in_memory()),
    }
}

fn cmd_baseline(a: BaselineArgs) -> CmdResult {
    let cfg = RunConfigFile::default();
    let rc = run_config(&cfg, &a.budget);
    let items = items_for(&a.data, &a.seeds.0, a.budget.cutoff.unwrap_or(cfg.cutoff))?;
    let mut m = open_manifest(Some(&a.out))?;
    let stats = acquire_baselines(&items, &rc, &mut m, a.budget.workers).map_err(s)?;
    println!("{} baseline entries in {}", stats.len(), a.out.display());
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> CmdResult {
    let inst = read_instance(&a.instance).map_err(s)?;
    let cutoff = crate::pipeline::resolve_cutoff(&inst, a.cutoff).map_err(s)?;
    let cfg = RunConfig {
        cutoff,
        seed: a.seed,
        node_budget: a.budget_nodes,
        decision_budget: a.budget_nodes,
        ..RunConfig::default()
    };
    let stats = if a.policy.eq_ignore_ascii_case("tgppo") {
        let ck = a
            .checkpoint
            .as_deref()
            .ok_or("--policy TGPPO needs --checkpoint")?;
        let params = load_checkpoint(ck).map_err(s)?;
        run(&inst.instance, &mut NetPolicy::greedy(&params), &cfg).map_err(s)?
    } else {
        let kind: PolicyKind = a.policy.parse().map_err(s)?;
        run(&inst.instance, &mut kind.build(a.seed), &cfg).map_err(s)?
    };
    // Write errors (a closed pipe) are not failures of the solve itself.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "status={} nodes={}",
        stats.status, stats.nodes_explored
    );
    let _ = writeln!(
        out,
        "primal={} dual={} pdi={:.6} decisions={} lp_iterations={}",
        stats.primal_bound, stats.dual_bound, stats.pdi, stats.decisions, stats.lp_iterations
    );
    if a.events {
        let _ = write!(out, "{}", crate::bnb::format_event_log(&stats.events));
    }
    Ok(())
}

fn prepare_pool(
    data: &Path,
    cfg: &RunConfigFile,
    b: &BudgetArgs,
    manifest: Option<&Path>,
) -> Result<(Vec<TrainingItem>, RunConfig), String> {
    let rc = run_config(cfg, b);
    let items = items_for(data, &cfg.seeds, b.cutoff.unwrap_or(cfg.cutoff))?;
    let mut m = open_manifest(manifest.or(cfg.manifest.as_deref()))?;
    acquire_baselines(&items, &rc, &mut m, b.workers).map_err(s)?;
    Ok((training_pool(&items, &m).map_err(s)?, rc))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(suffix);
    PathBuf::from(p)
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(e) = a.episodes {
        cfg.train.episodes = e;
    }
    if let Some(seeds) = a.seeds.clone() {
        cfg.seeds = seeds.0;
    }
    cfg.train.rollouts_per_update = cfg.train.rollouts_per_update.max(1);
    let params = PolicyParameters::init(&cfg.net).map_err(s)?;
    if cfg.train.episodes == 0 {
        save_checkpoint(&params, &a.out).map_err(s)?;
        println!("wrote initialized checkpoint {}", a.out.display());
        return Ok(());
    }
    let (pool, rc) = prepare_pool(&a.data, &cfg, &a.budget, a.manifest.as_deref())?;
    let every = cfg.checkpoint_every;
    let mut ck_err = None;
    let outcome = train(&pool, params, &cfg.train, &rc, |row, p| {
        if every > 0 && (row.episode + 1) % every == 0 {
            if let Err(e) = save_checkpoint(p, &sibling(&a.out, &format!(".ep{}", row.episode + 1)))
            {
                ck_err.get_or_insert(e.to_string());
            }
        }
    })
    .map_err(s)?;
    if let Some(e) = ck_err {
        return Err(e);
    }
    save_checkpoint(&outcome.params, &a.out).map_err(s)?;
    let log = sibling(&a.out, ".log.csv");
    write_train_log(&log, &outcome.log).map_err(|e| format!("{}: {e}", log.display()))?;
    println!(
        "trained {} episodes ({} updates); checkpoint {} log {}",
        outcome.log.len(),
        outcome.updates,
        a.out.display(),
        log.display()
    );
    Ok(())
}

/// Trains on `train` indices in rounds, scoring greedy rollouts on `valid`
/// after each round.
pub struct TrainingObjective {
    pub pool: Vec<TrainingItem>,
    pub base: RunConfigFile,
    pub run_cfg: RunConfig,
    pub episodes: usize,
    pub rounds: usize,
}

impl TrialObjective for TrainingObjective {
    fn evaluate(
        &self,
        cfg: &TunedConfig,
        train_idx: &[usize],
        valid_idx: &[usize],
        seed: u64,
        report: &mut dyn FnMut(f64) -> bool,
    ) -> Result<f64, EvalError> {
        let mut rc = self.base.clone();
        rc.apply_tuned(cfg);
        rc.net.seed = seed;
        let mut params =
            PolicyParameters::init(&rc.net).map_err(|e| EvalError::Other(e.to_string()))?;
        let pool: Vec<TrainingItem> = train_idx.iter().map(|&i| self.pool[i].clone()).collect();
        let valid: Vec<EvalItem> = valid_idx
            .iter()
            .map(|&i| {
                let t = &self.pool[i];
                EvalItem {
                    name: t.name.clone(),
                    seed: t.seed,
                    instance: t.instance.clone(),
                    cutoff: t.cutoff,
                }
            })
            .collect();
        let rounds = self.rounds.max(1);
        let mut score = f64::INFINITY;
        for r in 0..rounds {
            let n = self.episodes / rounds + usize::from(r < self.episodes % rounds);
            let tc = crate::ppo::TrainConfig {
                episodes: n,
                seed: seed ^ (r as u64 + 1),
                ..rc.train.clone()
            };
            params = train(&pool, params, &tc, &self.run_cfg, |_, _| {})
                .map_err(|e| EvalError::Other(e.to_string()))?
                .params;
            let rows = evaluate(&valid, &[EvalPolicy::Learned(&params)], &self.run_cfg, 1)?;
            let nodes: Vec<f64> = rows
                .iter()
                .filter(|r| r.completed())
                .map(|r| r.nodes as f64)
                .collect();
            let pdis: Vec<f64> = rows.iter().map(|r| r.pdi).collect();
            score = composite_score(&nodes, &pdis)?;
            if !report(score) {
                break;
            }
        }
        Ok(score)
    }
}

fn cmd_tune(a: TuneArgs) -> CmdResult {
    let cfg = load_config(a.config.as_deref())?;
    let (pool, rc) = prepare_pool(&a.data, &cfg, &a.budget, a.manifest.as_deref())?;
    let difficulty: Vec<u64> = pool.iter().map(|t| t.baseline.baseline_nodes).collect();
    let objective = TrainingObjective {
        pool,
        base: cfg,
        run_cfg: rc,
        episodes: a.episodes_per_trial,
        rounds: 3,
    };
    let out = nested_cv_tune(
        &difficulty,
        &SearchSpace::default(),
        a.trials,
        a.outer,
        a.inner,
        a.seed,
        &objective,
    )
    .map_err(s)?;
    let pruned = out.records.iter().filter(|r| r.pruned).count();
    let body = format!(
        "# best of {} trials (trial {}), mean outer-fold composite {:.6}; {} of {} inner runs pruned\n{}",
        a.trials,
        out.best_trial,
        out.best_outer_score,
        pruned,
        out.records.len(),
        out.best.to_config_lines()
    );
    std::fs::write(&a.out, body).map_err(|e| format!("{}: {e}", a.out.display()))?;
    println!("best config written to {}", a.out.display());
    Ok(())
}

fn parse_baselines(spec: &str) -> Result<Vec<PolicyKind>, String> {
    match spec.trim() {
        "all" => Ok(PolicyKind::ALL.to_vec()),
        "none" | "" => Ok(Vec::new()),
        list => list
            .split(',')
            .map(|t| t.trim().parse::<PolicyKind>().map_err(s))
            .collect(),
    }
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let cfg = RunConfigFile::default();
    let rc = run_config(&cfg, &a.budget);
    let items = items_for(&a.data, &a.seeds.0, a.budget.cutoff.unwrap_or(cfg.cutoff))?;
    let params = a
        .checkpoint
        .as_deref()
        .map(load_checkpoint)
        .transpose()
        .map_err(s)?;
    let mut policies: Vec<EvalPolicy<'_>> = parse_baselines(&a.baselines)?
        .into_iter()
        .map(EvalPolicy::Baseline)
        .collect();
    if let Some(p) = params.as_ref() {
        policies.push(EvalPolicy::Learned(p));
    }
    if policies.is_empty() {
        return Err("nothing to evaluate: no baselines and no checkpoint".into());
    }
    let rows = evaluate(&items, &policies, &rc, a.budget.workers).map_err(s)?;
    write_results(&a.out, &rows).map_err(s)?;
    println!("{} result rows written to {}", rows.len(), a.out.display());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> CmdResult {
    let rows = read_results(&a.results).map_err(s)?;
    let focus = a.focus.clone().unwrap_or_else(|| {
        if rows.iter().any(|r| r.policy == "TGPPO") {
            "TGPPO".into()
        } else {
            rows.first().map(|r| r.policy.clone()).unwrap_or_default()
        }
    });
    let report = build_report(&rows, &focus).map_err(s)?;
    std::fs::write(&a.out, report.to_markdown())
        .map_err(|e| format!("{}: {e}", a.out.display()))?;
    let wins = a.out.with_extension("wins.csv");
    let stats = a.out.with_extension("stats.csv");
    std::fs::write(&wins, report.wins_csv()).map_err(|e| format!("{}: {e}", wins.display()))?;
    std::fs::write(&stats, report.stats_csv()).map_err(|e| format!("{}: {e}", stats.display()))?;
    println!("report written to {}", a.out.display());
    Ok(())
}
