//! `key = value` run configuration files.
//!
//! One setting per line, `#` starts a comment, unknown keys are errors.
//! Keys mirror [`TrainConfig`], [`NetConfig`], solver budgets and paths.

use crate::bnb::RunConfig;
use crate::eval::TunedConfig;
use crate::net::NetConfig;
use crate::ppo::TrainConfig;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffMode {
    None,
    /// The instance's known optimum, computed once and cached.
    Auto,
    Value(f64),
}

impl FromStr for CutoffMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            t if t.eq_ignore_ascii_case("auto") => Ok(CutoffMode::Auto),
            t if t.eq_ignore_ascii_case("none") => Ok(CutoffMode::None),
            t => t
                .parse()
                .map(CutoffMode::Value)
                .map_err(|_| format!("bad cutoff `{t}`")),
        }
    }
}

impl fmt::Display for CutoffMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CutoffMode::None => f.write_str("NONE"),
            CutoffMode::Auto => f.write_str("AUTO"),
            CutoffMode::Value(v) => write!(f, "{v}"),
        }
    }
}

/// `a..b` (inclusive) or a comma list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad seed range `{s}`"))?;
        let b: u64 = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| format!("bad seed range `{s}`"))?;
        if b < a {
            return Err(format!("empty seed range `{s}`"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad seed `{t}`")))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based; 0 for whole-file validation errors.
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            0 => write!(f, "CONFIG_ERROR: {}", self.msg),
            n => write!(f, "CONFIG_ERROR at line {n}: {}", self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfigFile {
    pub net: NetConfig,
    pub train: TrainConfig,
    pub node_budget: usize,
    pub decision_budget: usize,
    pub time_budget: f64,
    pub cutoff: CutoffMode,
    pub seeds: Vec<u64>,
    pub checkpoint_every: usize,
    pub data: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        Self {
            net: NetConfig::new(256, 5, 8, 0.05, 0),
            train: TrainConfig::default(),
            node_budget: 100_000,
            decision_budget: 100_000,
            time_budget: 3600.0,
            cutoff: CutoffMode::Auto,
            seeds: (0..5).collect(),
            checkpoint_every: 50,
            data: None,
            manifest: None,
        }
    }
}

fn num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("bad value `{v}`"))
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError { line: i + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            c.set(k.trim(), v.trim()).map_err(err)?;
        }
        c.rebuild_net();
        c.validate().map_err(|msg| ConfigError { line: 0, msg })?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let (n, t) = (&mut self.net, &mut self.train);
        match key {
            "d_h" => n.d_h = num(v)?,
            "n_layers" => n.n_layers = num(v)?,
            "n_heads" => n.n_heads = num(v)?,
            "dropout" => n.dropout = num(v)?,
            "gate_depth" => n.gate_depth = num(v)?,
            "net_seed" => n.seed = num(v)?,
            "actor_lr" => t.actor_lr = num(v)?,
            "critic_lr" => t.critic_lr = num(v)?,
            "clip_eps" => t.clip_eps = num(v)?,
            "entropy_coef" => t.entropy_coef = num(v)?,
            "value_coef" => t.value_coef = num(v)?,
            "gamma" => t.gamma = num(v)?,
            "gae_lambda" => t.gae_lambda = num(v)?,
            "minibatch" => t.minibatch = num(v)?,
            "epochs" => t.epochs = num(v)?,
            "horizon" => t.horizon = num(v)?,
            "grad_clip_norm" => t.grad_clip_norm = num(v)?,
            "weight_decay" => t.weight_decay = num(v)?,
            "episodes" => t.episodes = num(v)?,
            "rollouts_per_update" => t.rollouts_per_update = num(v)?,
            "reward_signal" => t.reward_signal = v.parse()?,
            "seed" => t.seed = num(v)?,
            "node_budget" => self.node_budget = num(v)?,
            "decision_budget" => self.decision_budget = num(v)?,
            "time_budget" => self.time_budget = num(v)?,
            "cutoff" => self.cutoff = v.parse()?,
            "seeds" => self.seeds = parse_seeds(v)?,
            "checkpoint_every" => self.checkpoint_every = num(v)?,
            "data" => self.data = Some(PathBuf::from(v)),
            "manifest" => self.manifest = Some(PathBuf::from(v)),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Recomputes the head widths after `d_h` or `gate_depth` changed.
    fn rebuild_net(&mut self) {
        let n = &self.net;
        self.net = NetConfig::with_gate_depth(
            n.d_h,
            n.n_layers,
            n.n_heads,
            n.dropout,
            n.gate_depth,
            n.seed,
        );
    }

    pub fn validate(&self) -> Result<(), String> {
        self.net.validate().map_err(|e| e.to_string())?;
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err("seeds must not be empty".into());
        }
        Ok(())
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            node_budget: self.node_budget,
            decision_budget: self.decision_budget,
            time_budget: self.time_budget,
            ..RunConfig::default()
        }
    }

    /// Replaces the tunable fields with `t`.
    pub fn apply_tuned(&mut self, t: &TunedConfig) {
        self.net = NetConfig {
            d_h: t.d_h,
            n_layers: t.n_layers,
            n_heads: t.n_heads,
            dropout: t.dropout,
            ..self.net.clone()
        };
        self.rebuild_net();
        self.train = t.train_config(&self.train);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::RewardSignal;

    #[test]
    fn parses_and_reports_lines() {
        let c = RunConfigFile::parse("# comment\nd_h = 16\nn_heads = 2\nreward_signal = H2 # trailing\nseeds = 0..2\ncutoff = -4\n")
            .unwrap();
        assert_eq!(c.net.d_h, 16);
        assert_eq!(c.train.reward_signal, RewardSignal::H2);
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.cutoff, CutoffMode::Value(-4.0));
        let e = RunConfigFile::parse("d_h = 16\nbogus = 1\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = RunConfigFile::parse("gamma = lots\n").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(RunConfigFile::parse("just words\n").is_err());
    }

    #[test]
    fn tuned_config_round_trips_through_file() {
        let t = TunedConfig {
            d_h: 64,
            n_layers: 2,
            n_heads: 4,
            minibatch: 32,
            ..Default::default()
        };
        let c = RunConfigFile::parse(&t.to_config_lines()).unwrap();
        let mut d = RunConfigFile::default();
        d.apply_tuned(&t);
        assert_eq!(c.net, d.net);
        assert_eq!(c.train, d.train);
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("3").unwrap(), vec![3]);
        assert_eq!(parse_seeds("1,4").unwrap(), vec![1, 4]);
        assert!(parse_seeds("4..1").is_err());
    }
}
