use super::optim::AdamW;
use super::rollout::{run_episode, EpisodeResult};
use super::update::{ppo_update, UpdateError, UpdateStats};
use super::{compute_gae, TrainConfig, Transition};
use crate::bnb::{BnbError, RunConfig};
use crate::milp::ValidInstance;
use crate::net::PolicyParameters;
use crate::rewards::BaselineStats;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

pub const TRAIN_LOG_HEADER: &str =
    "episode,instance,seed,nodes,pdi,status,sum_reward,policy_loss,value_loss,entropy,clip_frac";

const MAX_NON_FINITE_STREAK: usize = 3;

/// One `(instance, seed)` pair of the augmented training pool. `instance` is
/// already permuted by `seed`.
#[derive(Debug, Clone)]
pub struct TrainingItem {
    pub name: String,
    pub seed: u64,
    pub instance: ValidInstance,
    pub cutoff: Option<f64>,
    pub baseline: BaselineStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub episode: usize,
    pub instance: String,
    pub seed: u64,
    pub nodes: usize,
    pub pdi: f64,
    pub status: String,
    pub sum_reward: f64,
    /// Transitions produced by the episode.
    pub steps: usize,
    pub update: UpdateStats,
}

impl TrainLogRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.10e},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
            self.episode,
            self.instance,
            self.seed,
            self.nodes,
            self.pdi,
            self.status,
            self.sum_reward + 0.0,
            self.update.policy_loss,
            self.update.value_loss,
            self.update.entropy,
            self.update.clip_frac
        )
    }

    pub fn mean_step_reward(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.sum_reward / self.steps as f64
        }
    }
}

pub fn format_train_log(rows: &[TrainLogRow]) -> String {
    let mut s = String::from(TRAIN_LOG_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

pub fn write_train_log(path: &Path, rows: &[TrainLogRow]) -> std::io::Result<()> {
    std::fs::File::create(path)?.write_all(format_train_log(rows).as_bytes())
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("bad training config: {0}")]
    Config(String),
    #[error("empty training pool")]
    EmptyPool,
    #[error("NON_FINITE_LOSS: {MAX_NON_FINITE_STREAK} consecutive non-finite updates, last at episode {episode}")]
    NonFiniteLoss { episode: usize },
    #[error(transparent)]
    Update(#[from] UpdateError),
    #[error(transparent)]
    Bnb(#[from] BnbError),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParameters,
    pub log: Vec<TrainLogRow>,
    pub updates: usize,
}

/// Episode order: the pool is reshuffled at the start of every pass.
fn episode_schedule(pool_len: usize, episodes: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_E90C);
    let mut out = Vec::with_capacity(episodes);
    let mut order: Vec<usize> = (0..pool_len).collect();
    while out.len() < episodes {
        order.shuffle(&mut rng);
        out.extend(order.iter().take(episodes - out.len()));
    }
    out
}

fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (episode as u64)
            .wrapping_add(1)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// PPO training over `pool`. `on_episode` sees the parameters after every
/// episode's update, e.g. to write periodic checkpoints.
pub fn train(
    pool: &[TrainingItem],
    mut params: PolicyParameters,
    cfg: &TrainConfig,
    run_cfg: &RunConfig,
    mut on_episode: impl FnMut(&TrainLogRow, &PolicyParameters),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate().map_err(TrainError::Config)?;
    if cfg.episodes == 0 {
        return Ok(TrainOutcome {
            params,
            log: Vec::new(),
            updates: 0,
        });
    }
    if pool.is_empty() {
        return Err(TrainError::EmptyPool);
    }
    let schedule = episode_schedule(pool.len(), cfg.episodes, cfg.seed);
    let mut opt = AdamW::new(&params, cfg.weight_decay);
    let mut log = Vec::with_capacity(cfg.episodes);
    let mut updates = 0usize;
    let mut streak = 0usize;

    for (round, chunk) in schedule.chunks(cfg.rollouts_per_update).enumerate() {
        let first_episode = round * cfg.rollouts_per_update;
        let snapshot = &params;
        let results: Vec<Result<EpisodeResult, BnbError>> = chunk
            .par_iter()
            .enumerate()
            .map(|(k, &item_idx)| {
                let item = &pool[item_idx];
                let rc = RunConfig {
                    cutoff: item.cutoff,
                    seed: item.seed,
                    ..run_cfg.clone()
                };
                run_episode(
                    &item.instance,
                    snapshot,
                    &rc,
                    &item.baseline,
                    cfg.reward_signal,
                    cfg.horizon,
                    episode_seed(cfg.seed, first_episode + k),
                )
            })
            .collect();
        let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

        let mut buffer: Vec<Transition> = Vec::new();
        let mut advantages = Vec::new();
        let mut returns = Vec::new();
        for ep in &results {
            if ep.transitions.is_empty() {
                continue;
            }
            let (a, r) = compute_gae(
                &ep.transitions,
                ep.bootstrap_value,
                cfg.gamma,
                cfg.gae_lambda,
            );
            buffer.extend(ep.transitions.iter().cloned());
            advantages.extend(a);
            returns.extend(r);
        }

        let mut stats = UpdateStats::default();
        if !buffer.is_empty() {
            let before = params.clone();
            match ppo_update(
                &mut params,
                &mut opt,
                &buffer,
                &advantages,
                &returns,
                cfg,
                updates as u64,
            ) {
                Ok(s) => {
                    stats = s;
                    streak = 0;
                    updates += 1;
                }
                Err(UpdateError::NonFiniteLoss | UpdateError::NonFiniteGrad(_)) => {
                    params = before;
                    streak += 1;
                    if streak >= MAX_NON_FINITE_STREAK {
                        return Err(TrainError::NonFiniteLoss {
                            episode: first_episode + chunk.len() - 1,
                        });
                    }
                    stats.policy_loss = f64::NAN;
                    stats.value_loss = f64::NAN;
                }
                Err(e) => return Err(e.into()),
            }
        }

        for (k, ep) in results.iter().enumerate() {
            let item = &pool[chunk[k]];
            let row = TrainLogRow {
                episode: first_episode + k,
                instance: item.name.clone(),
                seed: item.seed,
                nodes: ep.stats.nodes_explored,
                pdi: ep.stats.pdi,
                status: ep.stats.status.as_str().to_string(),
                sum_reward: ep.sum_reward,
                steps: ep.transitions.len(),
                update: stats,
            };
            on_episode(&row, &params);
            log.push(row);
        }
    }
    Ok(TrainOutcome {
        params,
        log,
        updates,
    })
}
