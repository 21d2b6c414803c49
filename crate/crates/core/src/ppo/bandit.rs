//! One-decision environments for checking that the update learns.

use super::rollout::sample_index;
use super::update::{ppo_update, UpdateError};
use super::{compute_gae, AdamW, TrainConfig, Transition};
use crate::bnb::{Observation, RunStatus};
use crate::features::{StateFeatures, CANDIDATE_DIM, NODE_DIM, TREE_DIM};
use crate::net::{forward, Mode, PolicyParameters};
use crate::rewards::{BaselineStats, RewardSignal, RewardState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A single fixed state whose candidates pay fixed rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBandit {
    pub state: StateFeatures,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BanditOutcome {
    pub updates: usize,
    pub best_prob: f64,
}

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> StateFeatures {
    let candidates = (0..n)
        .map(|_| {
            let mut r = [0.0; CANDIDATE_DIM];
            r.iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
            r
        })
        .collect();
    let mut node = [0.0; NODE_DIM];
    let mut tree = [0.0; TREE_DIM];
    node.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    tree.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    StateFeatures {
        candidates,
        node,
        tree,
        pad_mask: vec![false; n],
        candidate_var_ids: (0..n).collect(),
    }
}

impl SyntheticBandit {
    pub fn new(rewards: Vec<f64>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            state: random_state(rewards.len(), &mut rng),
            rewards,
        }
    }

    /// Two candidates paying `+1` and `-1`.
    pub fn two_armed(seed: u64) -> Self {
        Self::new(vec![1.0, -1.0], seed)
    }

    /// Branching on candidate `good` closes the tree after 1 node, any other
    /// candidate after `bad_nodes`. Rewards are the chosen signal's step plus
    /// terminal reward against a baseline of `baseline_nodes`.
    pub fn subtree(
        num_candidates: usize,
        good: usize,
        bad_nodes: u64,
        baseline_nodes: u64,
        signal: RewardSignal,
        seed: u64,
    ) -> Self {
        let bs = BaselineStats {
            instance: "synthetic".into(),
            seed,
            baseline_nodes,
            gap0: 1.0,
            pdi0: baseline_nodes as f64,
            status: RunStatus::Optimal,
        };
        let before = Observation {
            nodes_explored: 1,
            gap: 1.0,
            pdi: 0.0,
            tau: 0.0,
            open: 1,
            decisions: 0,
        };
        let rewards = (0..num_candidates)
            .map(|a| {
                let n = if a == good { 1 } else { bad_nodes };
                let after = Observation {
                    nodes_explored: n as usize,
                    gap: 0.0,
                    pdi: n as f64,
                    tau: n as f64 / (2 * bad_nodes.max(baseline_nodes)) as f64,
                    open: 0,
                    decisions: 1,
                };
                let rs = RewardState::from_observations(0, &before, &after, 1.0);
                signal.step(&rs, &bs)
                    + signal.terminal(Some(RunStatus::Optimal), n as f64, &rs, &bs)
            })
            .collect();
        Self::new(rewards, seed)
    }

    pub fn best(&self) -> usize {
        (0..self.rewards.len()).fold(0, |b, i| {
            if self.rewards[i] > self.rewards[b] {
                i
            } else {
                b
            }
        })
    }

    /// Probability the current policy puts on the best candidate.
    pub fn best_prob(&self, params: &PolicyParameters) -> f64 {
        forward(params, &self.state, Mode::Rollout).map_or(0.0, |o| o.probs[self.best()])
    }

    /// Runs `episodes_per_update` sampled episodes and one PPO update per
    /// round until the best candidate reaches `target` probability or
    /// `max_updates` rounds have passed.
    pub fn train(
        &self,
        params: &mut PolicyParameters,
        cfg: &TrainConfig,
        episodes_per_update: usize,
        max_updates: usize,
        target: f64,
    ) -> Result<BanditOutcome, UpdateError> {
        let mut opt = AdamW::new(params, cfg.weight_decay);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for u in 0..max_updates {
            let p = self.best_prob(params);
            if p >= target {
                return Ok(BanditOutcome {
                    updates: u,
                    best_prob: p,
                });
            }
            let out = forward(params, &self.state, Mode::Rollout)?;
            let buffer: Vec<Transition> = (0..episodes_per_update)
                .map(|_| {
                    let a = sample_index(&out.probs, rng.gen::<f64>());
                    Transition {
                        state: self.state.clone(),
                        action: a,
                        log_prob_old: out.probs[a].ln(),
                        value_old: out.value,
                        reward: self.rewards[a],
                        terminal: true,
                    }
                })
                .collect();
            let (adv, ret) = compute_gae(&buffer, 0.0, cfg.gamma, cfg.gae_lambda);
            ppo_update(params, &mut opt, &buffer, &adv, &ret, cfg, u as u64)?;
        }
        Ok(BanditOutcome {
            updates: max_updates,
            best_prob: self.best_prob(params),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;

    pub(crate) fn bandit_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            actor_lr: 3e-3,
            critic_lr: 3e-3,
            minibatch: 16,
            horizon: 16,
            epochs: 3,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn subtree_rewards_prefer_small_tree() {
        let b = SyntheticBandit::subtree(4, 2, 10, 5, RewardSignal::H3, 0);
        assert_eq!(b.best(), 2);
        assert!(b.rewards.iter().all(|r| r.is_finite()));
    }

    #[test]
    fn two_armed_bandit_converges() {
        let b = SyntheticBandit::two_armed(1);
        let mut p =
            PolicyParameters::init(&NetConfig::with_gate_depth(16, 1, 2, 0.0, 3, 1)).unwrap();
        let out = b.train(&mut p, &bandit_cfg(1), 16, 200, 0.9).unwrap();
        assert!(out.best_prob >= 0.9, "{out:?}");
        assert!(out.updates <= 200);
    }
}
