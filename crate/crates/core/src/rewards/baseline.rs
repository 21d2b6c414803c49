//! Baseline statistics and their on-disk manifest.

use crate::bnb::{run, BnbError, PolicyKind, RunConfig, RunStatus};
use crate::milp::ValidInstance;
use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const MANIFEST_HEADER: [&str; 6] = [
    "instance",
    "seed",
    "baseline_nodes",
    "gap0",
    "pdi0",
    "status",
];

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineStats {
    pub instance: String,
    pub seed: u64,
    /// `B`, at least 1.
    pub baseline_nodes: u64,
    pub gap0: f64,
    pub pdi0: f64,
    pub status: RunStatus,
}

impl BaselineStats {
    /// The baseline hit a budget; its statistics are budget-truncated.
    pub fn timed_out(&self) -> bool {
        self.status == RunStatus::TimeLimit
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("MALFORMED_MANIFEST: {0}")]
    Malformed(String),
    #[error(transparent)]
    Bnb(#[from] BnbError),
}

/// Baseline results keyed by `(instance, seed)`, optionally backed by a CSV file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineManifest {
    path: Option<PathBuf>,
    entries: BTreeMap<(String, u64), BaselineStats>,
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

impl BaselineManifest {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `path`, reading existing rows; a missing file starts empty.
    pub fn open(path: &Path) -> Result<Self, BaselineError> {
        let mut m = Self {
            path: Some(path.to_path_buf()),
            entries: BTreeMap::new(),
        };
        if !path.exists() {
            return Ok(m);
        }
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != MANIFEST_HEADER {
            return Err(BaselineError::Malformed(format!(
                "unexpected header {header:?}"
            )));
        }
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| BaselineError::Malformed(format!("row {}: bad {what}", i + 2));
            let stats = BaselineStats {
                instance: rec[0].to_string(),
                seed: rec[1].parse().map_err(|_| bad("seed"))?,
                baseline_nodes: rec[2].parse().map_err(|_| bad("baseline_nodes"))?,
                gap0: rec[3].parse().map_err(|_| bad("gap0"))?,
                pdi0: rec[4].parse().map_err(|_| bad("pdi0"))?,
                status: RunStatus::parse(&rec[5]).ok_or_else(|| bad("status"))?,
            };
            if stats.baseline_nodes < 1
                || !(0.0..=1.0).contains(&stats.gap0)
                || !(stats.pdi0 >= 0.0)
            {
                return Err(bad("values"));
            }
            m.entries
                .insert((stats.instance.clone(), stats.seed), stats);
        }
        Ok(m)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, instance: &str, seed: u64) -> Option<&BaselineStats> {
        self.entries.get(&(instance.to_string(), seed))
    }

    pub fn iter(&self) -> impl Iterator<Item = &BaselineStats> {
        self.entries.values()
    }

    /// Stores `stats`, appending a row to the backing file if there is one.
    pub fn insert(&mut self, stats: BaselineStats) -> Result<(), BaselineError> {
        if let Some(path) = &self.path {
            let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            if fresh {
                writeln!(f, "{}", MANIFEST_HEADER.join(","))?;
            }
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(Vec::new());
            w.write_record([
                stats.instance.as_str(),
                &stats.seed.to_string(),
                &stats.baseline_nodes.to_string(),
                &real(stats.gap0),
                &real(stats.pdi0),
                stats.status.as_str(),
            ])?;
            f.write_all(
                &w.into_inner()
                    .map_err(|e| BaselineError::Io(e.into_error()))?,
            )?;
        }
        self.entries
            .insert((stats.instance.clone(), stats.seed), stats);
        Ok(())
    }
}

/// Runs the reliability-pseudocost baseline on `inst`, or serves the cached
/// result. Returns the stats and whether they came from the manifest.
pub fn acquire_baseline(
    name: &str,
    inst: &ValidInstance,
    seed: u64,
    cfg: &RunConfig,
    manifest: &mut BaselineManifest,
) -> Result<(BaselineStats, bool), BaselineError> {
    if let Some(s) = manifest.get(name, seed) {
        return Ok((s.clone(), true));
    }
    let mut policy = PolicyKind::RelpscostLike.build(seed);
    let cfg = RunConfig {
        seed,
        truncate_after: None,
        keep_tree: false,
        ..cfg.clone()
    };
    let stats = run(inst, &mut policy, &cfg)?;
    let out = BaselineStats {
        instance: name.to_string(),
        seed,
        baseline_nodes: stats.nodes_explored.max(1) as u64,
        gap0: stats.initial_gap(),
        pdi0: stats.pdi,
        status: stats.status,
    };
    manifest.insert(out.clone())?;
    Ok((out, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{validate_instance, MilpInstance, RowSense};

    fn knapsack() -> ValidInstance {
        let mut inst = MilpInstance::new("knap2", 2);
        inst.objective = vec![-3.0, -4.0];
        inst.upper_bounds = vec![1.0, 1.0];
        inst.is_integer = vec![true, true];
        inst.add_row(&[(0, 2.0), (1, 3.0)], RowSense::Le, 4.0);
        validate_instance(&inst).unwrap()
    }

    #[test]
    fn knapsack_baseline_and_cache() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("baseline.csv");
        let cfg = RunConfig {
            cutoff: Some(-4.0),
            ..Default::default()
        };
        let mut m = BaselineManifest::open(&path).unwrap();
        let (s, hit) = acquire_baseline("knap2", &knapsack(), 0, &cfg, &mut m).unwrap();
        assert!(!hit);
        assert_eq!(s.baseline_nodes, 5);
        assert_eq!(s.status, RunStatus::Optimal);
        let mut reopened = BaselineManifest::open(&path).unwrap();
        assert_eq!(reopened.get("knap2", 0), Some(&s));
        let (again, hit) = acquire_baseline("knap2", &knapsack(), 0, &cfg, &mut reopened).unwrap();
        assert!(hit);
        assert_eq!(again, s);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("instance,seed,baseline_nodes,gap0,pdi0,status\n"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn integral_root_baseline() {
        let mut inst = MilpInstance::new("int", 1);
        inst.objective = vec![1.0];
        inst.upper_bounds = vec![3.0];
        inst.is_integer = vec![true];
        inst.add_row(&[(0, 1.0)], RowSense::Ge, 1.0);
        let v = validate_instance(&inst).unwrap();
        let (s, _) = acquire_baseline(
            "int",
            &v,
            0,
            &RunConfig::default(),
            &mut BaselineManifest::in_memory(),
        )
        .unwrap();
        assert_eq!(s.baseline_nodes, 1);
        assert_eq!(s.pdi0, 0.0);
    }

    #[test]
    fn bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(
            BaselineManifest::open(&path),
            Err(BaselineError::Malformed(_))
        ));
    }
}
