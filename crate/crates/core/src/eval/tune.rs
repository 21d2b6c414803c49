//! Nested cross-validated random search with median pruning.

use super::EvalError;
use crate::net::NetConfig;
use crate::ppo::TrainConfig;
use crate::rewards::RewardSignal;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One point of the search space.
#[derive(Debug, Clone, PartialEq)]
pub struct TunedConfig {
    pub d_h: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub reward_signal: RewardSignal,
}

impl Default for TunedConfig {
    /// The configuration reported as best at full scale.
    fn default() -> Self {
        Self {
            d_h: 256,
            n_layers: 5,
            n_heads: 8,
            dropout: 0.05,
            actor_lr: 2.4e-4,
            critic_lr: 1.2e-4,
            clip_eps: 0.16,
            entropy_coef: 3e-3,
            gamma: 0.97,
            gae_lambda: 0.92,
            minibatch: 256,
            epochs: 3,
            reward_signal: RewardSignal::H3,
        }
    }
}

impl TunedConfig {
    pub fn net_config(&self, seed: u64) -> NetConfig {
        NetConfig::new(self.d_h, self.n_layers, self.n_heads, self.dropout, seed)
    }

    /// `base` with this point's PPO fields substituted.
    pub fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            clip_eps: self.clip_eps,
            entropy_coef: self.entropy_coef,
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            minibatch: self.minibatch.min(base.horizon),
            epochs: self.epochs,
            reward_signal: self.reward_signal,
            ..base.clone()
        }
    }

    /// `key = value` lines in the run-config file format.
    pub fn to_config_lines(&self) -> String {
        format!(
            "d_h = {}\nn_layers = {}\nn_heads = {}\ndropout = {}\nactor_lr = {}\ncritic_lr = {}\nclip_eps = {}\n\
             entropy_coef = {}\ngamma = {}\ngae_lambda = {}\nminibatch = {}\nepochs = {}\nreward_signal = {}\n",
            self.d_h,
            self.n_layers,
            self.n_heads,
            self.dropout,
            self.actor_lr,
            self.critic_lr,
            self.clip_eps,
            self.entropy_coef,
            self.gamma,
            self.gae_lambda,
            self.minibatch,
            self.epochs,
            self.reward_signal
        )
    }
}

/// Ranges to sample from. Learning rates and the entropy weight are drawn
/// log-uniformly, other intervals uniformly, sets uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub d_h: Vec<usize>,
    pub n_layers: Vec<usize>,
    pub n_heads: Vec<usize>,
    pub dropout: (f64, f64),
    pub actor_lr: (f64, f64),
    pub critic_lr: (f64, f64),
    pub clip_eps: (f64, f64),
    pub entropy_coef: (f64, f64),
    pub gamma: (f64, f64),
    pub gae_lambda: (f64, f64),
    pub minibatch: Vec<usize>,
    pub epochs: Vec<usize>,
    pub reward_signal: Vec<RewardSignal>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            d_h: vec![64, 128, 256, 384],
            n_layers: vec![2, 3, 4, 5, 6],
            n_heads: vec![2, 4, 8],
            dropout: (0.0, 0.3),
            actor_lr: (1e-6, 3e-4),
            critic_lr: (1e-6, 3e-4),
            clip_eps: (0.05, 0.3),
            entropy_coef: (1e-5, 1e-2),
            gamma: (0.92, 0.999),
            gae_lambda: (0.8, 0.99),
            minibatch: vec![32, 64, 128, 256, 512],
            epochs: vec![1, 2, 3, 4, 5, 6],
            reward_signal: RewardSignal::ALL.to_vec(),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    uniform(rng, (lo.ln(), hi.ln())).exp().clamp(lo, hi)
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&x)
}

impl SearchSpace {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> TunedConfig {
        let pick =
            |rng: &mut ChaCha8Rng, v: &[usize]| *v.choose(rng).expect("non-empty choice set");
        TunedConfig {
            d_h: pick(rng, &self.d_h),
            n_layers: pick(rng, &self.n_layers),
            n_heads: pick(rng, &self.n_heads),
            dropout: uniform(rng, self.dropout),
            actor_lr: log_uniform(rng, self.actor_lr),
            critic_lr: log_uniform(rng, self.critic_lr),
            clip_eps: uniform(rng, self.clip_eps),
            entropy_coef: log_uniform(rng, self.entropy_coef),
            gamma: uniform(rng, self.gamma),
            gae_lambda: uniform(rng, self.gae_lambda),
            minibatch: pick(rng, &self.minibatch),
            epochs: pick(rng, &self.epochs),
            reward_signal: *self
                .reward_signal
                .choose(rng)
                .expect("non-empty reward set"),
        }
    }

    pub fn contains(&self, c: &TunedConfig) -> bool {
        self.d_h.contains(&c.d_h)
            && self.n_layers.contains(&c.n_layers)
            && self.n_heads.contains(&c.n_heads)
            && within(c.dropout, self.dropout)
            && within(c.actor_lr, self.actor_lr)
            && within(c.critic_lr, self.critic_lr)
            && within(c.clip_eps, self.clip_eps)
            && within(c.entropy_coef, self.entropy_coef)
            && within(c.gamma, self.gamma)
            && within(c.gae_lambda, self.gae_lambda)
            && self.minibatch.contains(&c.minibatch)
            && self.epochs.contains(&c.epochs)
            && self.reward_signal.contains(&c.reward_signal)
    }
}

/// Quartile bin (0..4) of each item by baseline node count; ties broken by index.
pub fn difficulty_quartiles(baseline_nodes: &[u64]) -> Vec<usize> {
    let n = baseline_nodes.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by_key(|&i| (baseline_nodes[i], i));
    let mut bins = vec![0; n];
    for (rank, &i) in idx.iter().enumerate() {
        bins[i] = rank * 4 / n.max(1);
    }
    bins
}

/// Fold index per item, dealing each bin's shuffled members round-robin so
/// every fold gets `floor` or `ceil` of each bin's share.
pub fn stratified_folds(bins: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bins = bins.iter().copied().max().map_or(0, |b| b + 1);
    let mut fold = vec![0; bins.len()];
    let mut next = 0;
    for b in 0..n_bins {
        let mut members: Vec<usize> = (0..bins.len()).filter(|&i| bins[i] == b).collect();
        members.shuffle(&mut rng);
        for i in members {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

/// Stops a trial after `patience` consecutive reports that do not beat the
/// median of earlier trials' reports at the same step.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianPruner {
    pub patience: usize,
    steps: Vec<Vec<f64>>,
}

impl MedianPruner {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            steps: Vec::new(),
        }
    }

    pub fn median_at(&self, step: usize) -> Option<f64> {
        let mut v = self.steps.get(step)?.clone();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 {
            v[m]
        } else {
            0.5 * (v[m - 1] + v[m])
        })
    }

    pub fn fails_to_improve(&self, step: usize, value: f64) -> bool {
        self.median_at(step).is_some_and(|m| value >= m)
    }

    /// Adds a finished (or pruned) trial's reports to the history.
    pub fn record(&mut self, reports: &[f64]) {
        for (s, &v) in reports.iter().enumerate() {
            if self.steps.len() <= s {
                self.steps.resize_with(s + 1, Vec::new);
            }
            self.steps[s].push(v);
        }
    }

    /// Step index at which `stream` would be pruned, if any.
    pub fn replay(&self, stream: &[f64]) -> Option<usize> {
        let mut streak = 0;
        for (s, &v) in stream.iter().enumerate() {
            streak = if self.fails_to_improve(s, v) {
                streak + 1
            } else {
                0
            };
            if streak >= self.patience {
                return Some(s);
            }
        }
        None
    }
}

/// Trains a configuration on `train` items and scores it on `valid` items.
/// `report` receives intermediate composite scores and returns `false` when
/// the trial should stop.
pub trait TrialObjective: Sync {
    fn evaluate(
        &self,
        cfg: &TunedConfig,
        train: &[usize],
        valid: &[usize],
        seed: u64,
        report: &mut dyn FnMut(f64) -> bool,
    ) -> Result<f64, EvalError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub outer_fold: usize,
    pub config: TunedConfig,
    pub inner_scores: Vec<f64>,
    pub pruned: bool,
    /// Set for the trial chosen in this outer fold.
    pub outer_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub best: TunedConfig,
    pub best_trial: usize,
    pub best_outer_score: f64,
    pub records: Vec<TrialRecord>,
}

const PRUNER_PATIENCE: usize = 3;

/// Nested cross-validation over `baseline_nodes.len()` items. The same
/// `trials` sampled configurations compete in every outer fold; the winner
/// overall has the lowest mean outer-fold score among fold winners.
pub fn nested_cv_tune(
    baseline_nodes: &[u64],
    space: &SearchSpace,
    trials: usize,
    outer: usize,
    inner: usize,
    seed: u64,
    objective: &dyn TrialObjective,
) -> Result<TuneOutcome, EvalError> {
    let n = baseline_nodes.len();
    if trials == 0 || outer < 2 || inner < 2 || n < outer * inner {
        return Err(EvalError::InsufficientData(format!(
            "{n} items for {outer}x{inner} folds and {trials} trials"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs: Vec<TunedConfig> = (0..trials).map(|_| space.sample(&mut rng)).collect();
    let bins = difficulty_quartiles(baseline_nodes);
    let outer_fold = stratified_folds(&bins, outer, seed);
    let mut records = Vec::new();
    let mut outer_scores: Vec<Vec<f64>> = vec![Vec::new(); trials];

    for o in 0..outer {
        let test: Vec<usize> = (0..n).filter(|&i| outer_fold[i] == o).collect();
        let train: Vec<usize> = (0..n).filter(|&i| outer_fold[i] != o).collect();
        let train_bins: Vec<usize> = train.iter().map(|&i| bins[i]).collect();
        let inner_fold = stratified_folds(&train_bins, inner, seed.wrapping_add(1 + o as u64));
        let mut pruner = MedianPruner::new(PRUNER_PATIENCE);
        let first_record = records.len();
        for (t, cfg) in configs.iter().enumerate() {
            let mut reports = Vec::new();
            let mut streak = 0;
            let mut pruned = false;
            let mut inner_scores = Vec::new();
            for f in 0..inner {
                let valid: Vec<usize> = (0..train.len())
                    .filter(|&j| inner_fold[j] == f)
                    .map(|j| train[j])
                    .collect();
                let fit: Vec<usize> = (0..train.len())
                    .filter(|&j| inner_fold[j] != f)
                    .map(|j| train[j])
                    .collect();
                let mut report = |v: f64| {
                    let step = reports.len();
                    reports.push(v);
                    streak = if pruner.fails_to_improve(step, v) {
                        streak + 1
                    } else {
                        0
                    };
                    if streak >= PRUNER_PATIENCE {
                        pruned = true;
                    }
                    !pruned
                };
                let trial_seed =
                    seed ^ ((o * 1000 + t * 10 + f) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let s = objective.evaluate(cfg, &fit, &valid, trial_seed, &mut report)?;
                inner_scores.push(s);
                if pruned {
                    break;
                }
            }
            pruner.record(&reports);
            records.push(TrialRecord {
                trial: t,
                outer_fold: o,
                config: cfg.clone(),
                inner_scores,
                pruned,
                outer_score: None,
            });
        }
        let fold_records = &mut records[first_record..];
        let mean = |r: &TrialRecord| {
            r.inner_scores.iter().sum::<f64>() / r.inner_scores.len().max(1) as f64
        };
        let key = |r: &TrialRecord| (r.pruned, mean(r));
        let winner = (0..fold_records.len())
            .min_by(|&a, &b| {
                let (ka, kb) = (key(&fold_records[a]), key(&fold_records[b]));
                ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
            })
            .expect("at least one trial");
        let t = fold_records[winner].trial;
        let score = objective.evaluate(
            &configs[t],
            &train,
            &test,
            seed.wrapping_add(7919 * (o as u64 + 1)),
            &mut |_| true,
        )?;
        fold_records[winner].outer_score = Some(score);
        outer_scores[t].push(score);
    }

    let (best_trial, best_outer_score) = outer_scores
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(t, s)| (t, s.iter().sum::<f64>() / s.len() as f64))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("every outer fold selects a trial");
    Ok(TuneOutcome {
        best: configs[best_trial].clone(),
        best_trial,
        best_outer_score,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scores a config by its distance from a fixed target learning rate.
    struct Quadratic;

    impl TrialObjective for Quadratic {
        fn evaluate(
            &self,
            cfg: &TunedConfig,
            _train: &[usize],
            valid: &[usize],
            _seed: u64,
            report: &mut dyn FnMut(f64) -> bool,
        ) -> Result<f64, EvalError> {
            let s = (cfg.actor_lr.ln() - 1e-4f64.ln()).powi(2) + valid.len() as f64 * 1e-3;
            for _ in 0..3 {
                if !report(s) {
                    break;
                }
            }
            Ok(s)
        }
    }

    #[test]
    fn single_trial_wins_by_default() {
        let b: Vec<u64> = (1..=20).collect();
        let out = nested_cv_tune(&b, &SearchSpace::default(), 1, 5, 2, 3, &Quadratic).unwrap();
        assert_eq!(out.best_trial, 0);
        assert_eq!(out.records.len(), 5);
        assert!(out.records.iter().all(|r| r.outer_score.is_some()));
    }

    #[test]
    fn tuning_prefers_better_configs_and_prunes() {
        let b: Vec<u64> = (1..=20).collect();
        let out = nested_cv_tune(&b, &SearchSpace::default(), 12, 5, 2, 4, &Quadratic).unwrap();
        let scores: Vec<f64> = out
            .records
            .iter()
            .filter(|r| r.outer_fold == 0)
            .map(|r| r.inner_scores[0])
            .collect();
        let best = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(out.records.iter().any(|r| r.pruned));
        let chosen = (out.best.actor_lr.ln() - 1e-4f64.ln()).powi(2);
        assert!(chosen <= best + 0.1);
    }

    #[test]
    fn too_little_data() {
        assert!(matches!(
            nested_cv_tune(&[1, 2, 3], &SearchSpace::default(), 1, 5, 2, 0, &Quadratic),
            Err(EvalError::InsufficientData(_))
        ));
    }

    #[test]
    fn pruner_replay() {
        let mut p = MedianPruner::new(3);
        p.record(&[1.0, 1.0, 1.0, 1.0]);
        p.record(&[3.0, 3.0, 3.0, 3.0]);
        assert_eq!(p.replay(&[5.0, 5.0, 5.0, 5.0]), Some(2));
        assert_eq!(p.replay(&[5.0, 1.0, 5.0, 5.0]), None);
        assert_eq!(MedianPruner::new(3).replay(&[9.0; 5]), None);
    }

    #[test]
    fn stratification_balances_quartiles() {
        let b: Vec<u64> = (0..40).map(|i| (i * 37 % 40) as u64).collect();
        let bins = difficulty_quartiles(&b);
        let folds = stratified_folds(&bins, 5, 11);
        for f in 0..5 {
            for q in 0..4 {
                let count = (0..40).filter(|&i| folds[i] == f && bins[i] == q).count();
                assert!((count as f64 - 10.0 / 5.0).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn samples_stay_in_space() {
        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            assert!(space.contains(&space.sample(&mut rng)));
        }
    }
}
