//! PPO on a one-decision problem: one candidate closes the tree at once,
//! the others cost ten nodes.

use tgbranch::net::{NetConfig, PolicyParameters};
use tgbranch::ppo::{SyntheticBandit, TrainConfig};
use tgbranch::rewards::RewardSignal;

fn main() {
    for seed in 0..5 {
        let bandit = SyntheticBandit::subtree(4, 2, 10, 5, RewardSignal::H3, seed);
        let mut params =
            PolicyParameters::init(&NetConfig::with_gate_depth(16, 1, 2, 0.0, 2, seed)).unwrap();
        let start = bandit.best_prob(&params);
        let cfg = TrainConfig {
            actor_lr: 3e-3,
            critic_lr: 1.5e-3,
            minibatch: 16,
            seed,
            ..TrainConfig::default()
        };
        let out = bandit.train(&mut params, &cfg, 16, 200, 0.9).unwrap();
        println!(
            "seed {seed}: rewards {:?}, p(best) {:.3} -> {:.3} after {} updates",
            bandit
                .rewards
                .iter()
                .map(|r| (r * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>(),
            start,
            out.best_prob,
            out.updates
        );
    }
}
