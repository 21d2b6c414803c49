//! PPO training of the branching policy.

mod bandit;
mod optim;
mod rollout;
mod train;
mod update;

pub use bandit::{BanditOutcome, SyntheticBandit};
pub use optim::AdamW;
pub use rollout::{episode_transitions, run_episode, EpisodeResult, NetPolicy, PolicyRecord};
pub use train::{
    format_train_log, train, write_train_log, TrainError, TrainLogRow, TrainOutcome, TrainingItem,
    TRAIN_LOG_HEADER,
};
pub use update::{ppo_update, surrogate, UpdateError, UpdateStats};

use crate::features::StateFeatures;
use crate::rewards::RewardSignal;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub minibatch: usize,
    pub epochs: usize,
    /// Transitions per buffer before an episode is cut and updated on.
    pub horizon: usize,
    pub grad_clip_norm: f64,
    pub weight_decay: f64,
    pub episodes: usize,
    /// Episodes collected with one parameter snapshot before each update.
    pub rollouts_per_update: usize,
    pub reward_signal: RewardSignal,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            actor_lr: 2.4e-4,
            critic_lr: 1.2e-4,
            clip_eps: 0.16,
            entropy_coef: 3e-3,
            value_coef: 0.5,
            gamma: 0.97,
            gae_lambda: 0.92,
            minibatch: 256,
            epochs: 3,
            horizon: 2048,
            grad_clip_norm: 0.5,
            weight_decay: 0.01,
            episodes: 500,
            rollouts_per_update: 1,
            reward_signal: RewardSignal::H3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(format!("gae_lambda {} outside [0, 1]", self.gae_lambda));
        }
        if !(self.clip_eps > 0.0) {
            return Err("clip_eps must be positive".into());
        }
        if self.minibatch == 0 || self.horizon == 0 || self.minibatch > self.horizon {
            return Err(format!(
                "need 0 < minibatch ({}) <= horizon ({})",
                self.minibatch, self.horizon
            ));
        }
        if self.rollouts_per_update == 0 {
            return Err("rollouts_per_update must be at least 1".into());
        }
        if self.actor_lr < 0.0 || self.critic_lr < 0.0 || self.weight_decay < 0.0 {
            return Err("learning rates and weight decay must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateFeatures,
    pub action: usize,
    pub log_prob_old: f64,
    pub value_old: f64,
    pub reward: f64,
    pub terminal: bool,
}

/// Generalized advantage estimation over an ordered buffer.
///
/// `bootstrap_value` is `V(s_{T+1})` for a cut episode and ignored after a
/// terminal step.
pub fn compute_gae(
    buffer: &[Transition],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let rewards: Vec<f64> = buffer.iter().map(|t| t.reward).collect();
    let values: Vec<f64> = buffer.iter().map(|t| t.value_old).collect();
    let terminals: Vec<bool> = buffer.iter().map(|t| t.terminal).collect();
    gae(
        &rewards,
        &values,
        &terminals,
        bootstrap_value,
        gamma,
        lambda,
    )
}

pub fn gae(
    rewards: &[f64],
    values: &[f64],
    terminals: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if terminals[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        adv[t] = delta + gamma * lambda * live * next_adv;
        next_value = values[t];
        next_adv = adv[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Mean 0, std 1 (population, `eps = 1e-8`); left unchanged for a single sample.
pub fn standardize(xs: &mut [f64]) {
    if xs.len() <= 1 {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    xs.iter_mut().for_each(|x| *x = (*x - mean) / (std + 1e-8));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_examples() {
        let (a, r) = gae(&[1.0], &[0.0], &[true], 0.0, 0.97, 0.92);
        assert_eq!((a[0], r[0]), (1.0, 1.0));
        let (a, _) = gae(&[1.0, 1.0], &[0.0, 0.0], &[false, true], 0.0, 0.5, 0.5);
        assert_eq!(a, vec![1.25, 1.0]);
        let (a, _) = gae(&[0.0; 3], &[0.0; 3], &[false, false, true], 0.0, 0.9, 0.9);
        assert_eq!(a, vec![0.0; 3]);
    }

    #[test]
    fn bootstrap_used_only_without_terminal() {
        let (a, _) = gae(&[0.0], &[0.0], &[false], 2.0, 0.5, 1.0);
        assert_eq!(a[0], 1.0);
        let (a, _) = gae(&[0.0], &[0.0], &[true], 2.0, 0.5, 1.0);
        assert_eq!(a[0], 0.0);
    }

    #[test]
    fn standardize_single_is_identity() {
        let mut x = vec![3.5];
        standardize(&mut x);
        assert_eq!(x, vec![3.5]);
        let mut y = vec![1.0, 2.0, 4.0, 7.0];
        standardize(&mut y);
        let m: f64 = y.iter().sum::<f64>() / 4.0;
        let s = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn default_config_is_valid_except_horizon_rule() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            minibatch: 4096,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
