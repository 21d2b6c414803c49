//! Dataset handling and the stages shared by the CLI and the examples:
//! generation, optimum lookup, seed augmentation, baselines, training and
//! evaluation pools.

use crate::bnb::{run, BnbError, PolicyKind, RunConfig, RunStatus};
use crate::config::CutoffMode;
use crate::eval::EvalItem;
use crate::milp::{
    brute_force_solve, generate_instance, parse_mps, permute_columns, read_native,
    validate_instance, write_native, BruteForceOutcome, GenerateError, GeneratorParams,
    MilpInstance, ValidInstance,
};
use crate::ppo::TrainingItem;
use crate::rewards::{acquire_baseline, BaselineError, BaselineManifest, BaselineStats};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

pub const INSTANCE_EXT: &str = "milp";
pub const OPTIMUM_EXT: &str = "opt";
/// Instances with at most this many integer assignments are solved by enumeration.
pub const BRUTE_FORCE_LIMIT: u64 = 1 << 16;
/// Node budget of the search used to find optima of larger instances.
pub const OPTIMUM_NODE_BUDGET: usize = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("INVALID_INSTANCE {name}: {msg}")]
    Invalid { name: String, msg: String },
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Bnb(#[from] BnbError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("NO_OPTIMUM {0}: search did not finish within the budget")]
    NoOptimum(String),
    #[error("MISSING_BASELINE ({0}, {1})")]
    MissingBaseline(String, u64),
    #[error("EMPTY_DATASET: {0}")]
    EmptyDataset(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A validated instance and where it came from.
#[derive(Debug, Clone)]
pub struct NamedInstance {
    pub name: String,
    pub path: Option<PathBuf>,
    pub instance: ValidInstance,
}

impl NamedInstance {
    pub fn new(instance: MilpInstance, path: Option<PathBuf>) -> Result<Self, PipelineError> {
        let name = instance.name.clone();
        let instance = validate_instance(&instance).map_err(|errs| PipelineError::Invalid {
            name: name.clone(),
            msg: errs
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        })?;
        Ok(Self {
            name,
            path,
            instance,
        })
    }
}

/// Writes `count` instances with seeds `params.seed + i`; returns their paths.
pub fn generate_dataset(
    params: &GeneratorParams,
    count: usize,
    out: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let mut paths = Vec::with_capacity(count);
    for i in 0..count {
        let p = GeneratorParams {
            seed: params.seed + i as u64,
            ..params.clone()
        };
        let mut inst = generate_instance(&p)?;
        inst.name = format!("{}_{}x{}_{:03}", p.family, p.rows, p.cols, i);
        let path = out.join(format!("{}.{INSTANCE_EXT}", inst.name));
        std::fs::write(&path, write_native(&inst)).map_err(io_err(&path))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads a native or MPS instance file.
pub fn read_instance(path: &Path) -> Result<NamedInstance, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let parse_err = |msg: String| PipelineError::Parse {
        path: path.to_path_buf(),
        msg,
    };
    let mut inst = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("mps") => {
            parse_mps(&text).map_err(|e| parse_err(e.to_string()))?
        }
        _ => read_native(&text).map_err(|e| parse_err(e.to_string()))?,
    };
    if inst.name.is_empty() {
        inst.name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("instance")
            .to_string();
    }
    NamedInstance::new(inst, Some(path.to_path_buf()))
}

/// Every `.milp` and `.mps` file in `dir`, sorted by file name.
pub fn load_dataset(dir: &Path) -> Result<Vec<NamedInstance>, PipelineError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e == INSTANCE_EXT || e.eq_ignore_ascii_case("mps"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(PipelineError::EmptyDataset(dir.to_path_buf()));
    }
    files.iter().map(|p| read_instance(p)).collect()
}

/// Optimal objective value, or `None` for infeasible and unbounded problems.
pub fn known_optimum(inst: &ValidInstance) -> Result<Option<f64>, PipelineError> {
    if let Ok(out) = brute_force_solve(inst, BRUTE_FORCE_LIMIT) {
        return Ok(match out {
            BruteForceOutcome::Optimal { value, .. } => Some(value),
            _ => None,
        });
    }
    let cfg = RunConfig {
        node_budget: OPTIMUM_NODE_BUDGET,
        decision_budget: OPTIMUM_NODE_BUDGET,
        ..RunConfig::default()
    };
    let stats = run(inst, &mut PolicyKind::RelpscostLike.build(0), &cfg)?;
    match stats.status {
        RunStatus::Optimal => Ok(Some(stats.primal_bound)),
        RunStatus::Infeasible | RunStatus::Unbounded => Ok(None),
        RunStatus::TimeLimit => Err(PipelineError::NoOptimum(inst.name.clone())),
    }
}

fn optimum_cache(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(format!(".{OPTIMUM_EXT}"));
    PathBuf::from(p)
}

/// The cutoff to use for `inst`. `Auto` reads or fills a cache file next to
/// the instance file.
pub fn resolve_cutoff(
    inst: &NamedInstance,
    mode: CutoffMode,
) -> Result<Option<f64>, PipelineError> {
    match mode {
        CutoffMode::None => Ok(None),
        CutoffMode::Value(v) => Ok(Some(v)),
        CutoffMode::Auto => {
            let cache = inst.path.as_deref().map(optimum_cache);
            if let Some(c) = cache.as_deref().filter(|c| c.exists()) {
                let text = std::fs::read_to_string(c).map_err(io_err(c))?;
                let t = text.trim();
                if t == "none" {
                    return Ok(None);
                }
                return crate::milp::parse_real(t)
                    .map(Some)
                    .ok_or_else(|| PipelineError::Parse {
                        path: c.to_path_buf(),
                        msg: format!("bad optimum `{t}`"),
                    });
            }
            let opt = known_optimum(&inst.instance)?;
            if let Some(c) = cache {
                let body = opt.map_or("none".to_string(), crate::milp::format_real);
                std::fs::write(&c, body + "\n").map_err(io_err(&c))?;
            }
            Ok(opt)
        }
    }
}

/// Every `(instance, seed)` pair, with columns permuted by the seed.
pub fn augment(
    instances: &[NamedInstance],
    seeds: &[u64],
    cutoff: CutoffMode,
) -> Result<Vec<EvalItem>, PipelineError> {
    let mut items = Vec::with_capacity(instances.len() * seeds.len());
    for inst in instances {
        let c = resolve_cutoff(inst, cutoff)?;
        for &seed in seeds {
            let permuted = permute_columns(&inst.instance, seed);
            items.push(EvalItem {
                name: inst.name.clone(),
                seed,
                instance: validated(permuted)?,
                cutoff: c,
            });
        }
    }
    Ok(items)
}

fn validated(inst: MilpInstance) -> Result<ValidInstance, PipelineError> {
    let name = inst.name.clone();
    validate_instance(&inst).map_err(|errs| PipelineError::Invalid {
        name,
        msg: errs
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join("; "),
    })
}

/// Fills `manifest` with the reference baseline of every item not yet in it,
/// running up to `workers` searches at once.
pub fn acquire_baselines(
    items: &[EvalItem],
    run_cfg: &RunConfig,
    manifest: &mut BaselineManifest,
    workers: usize,
) -> Result<Vec<BaselineStats>, PipelineError> {
    let missing: Vec<&EvalItem> = items
        .iter()
        .filter(|it| manifest.get(&it.name, it.seed).is_none())
        .collect();
    let compute = |it: &&EvalItem| -> Result<BaselineStats, PipelineError> {
        let cfg = RunConfig {
            cutoff: it.cutoff,
            ..run_cfg.clone()
        };
        let mut scratch = BaselineManifest::in_memory();
        Ok(acquire_baseline(&it.name, &it.instance, it.seed, &cfg, &mut scratch)?.0)
    };
    let fresh: Vec<BaselineStats> = if workers <= 1 {
        missing.iter().map(compute).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        pool.install(|| missing.par_iter().map(compute).collect::<Result<_, _>>())?
    };
    for s in fresh {
        manifest.insert(s)?;
    }
    items
        .iter()
        .map(|it| {
            manifest
                .get(&it.name, it.seed)
                .cloned()
                .ok_or_else(|| PipelineError::MissingBaseline(it.name.clone(), it.seed))
        })
        .collect()
}

/// Pairs items with their baselines for training.
pub fn training_pool(
    items: &[EvalItem],
    manifest: &BaselineManifest,
) -> Result<Vec<TrainingItem>, PipelineError> {
    items
        .iter()
        .map(|it| {
            let baseline = manifest
                .get(&it.name, it.seed)
                .cloned()
                .ok_or_else(|| PipelineError::MissingBaseline(it.name.clone(), it.seed))?;
            Ok(TrainingItem {
                name: it.name.clone(),
                seed: it.seed,
                instance: it.instance.clone(),
                cutoff: it.cutoff,
                baseline,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::Family;

    #[test]
    fn generate_load_and_cache_optimum() {
        let dir = tempfile::tempdir().unwrap();
        let params = GeneratorParams {
            family: Family::SetCover,
            ..GeneratorParams::set_cover(6, 8, 0.4, 5)
        };
        let paths = generate_dataset(&params, 3, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let data = load_dataset(dir.path()).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data[0].name, "set_cover_6x8_000");
        let opt = resolve_cutoff(&data[0], CutoffMode::Auto).unwrap();
        assert!(opt.is_some());
        assert!(optimum_cache(&paths[0]).exists());
        assert_eq!(resolve_cutoff(&data[0], CutoffMode::Auto).unwrap(), opt);
        let items = augment(&data[..1], &[0, 1], CutoffMode::Auto).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].instance.num_vars, 8);
        let mut m = BaselineManifest::in_memory();
        let b = acquire_baselines(&items, &RunConfig::default(), &mut m, 2).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(training_pool(&items, &m).unwrap().len(), 2);
    }
}
