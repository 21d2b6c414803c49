use super::optim::{clip_global_norm, AdamW};
use super::{standardize, TrainConfig, Transition};
use crate::net::{
    backward, check_finite_grads, forward_graph, log_prob_entropy, logit_adjoint, Mat, Mode,
    NetError, PolicyParameters,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UpdateError {
    #[error("NON_FINITE_LOSS")]
    NonFiniteLoss,
    #[error("NON_FINITE_GRAD: {0}")]
    NonFiniteGrad(String),
    #[error("empty buffer")]
    EmptyBuffer,
    #[error(transparent)]
    Net(NetError),
}

impl From<NetError> for UpdateError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::NonFiniteGrad(name) => UpdateError::NonFiniteGrad(name),
            NetError::NonFinite => UpdateError::NonFiniteLoss,
            other => UpdateError::Net(other),
        }
    }
}

/// Averages over every sample processed in every epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub mean_ratio: f64,
    pub samples: usize,
}

/// Per-sample clipped surrogate `min(r A, clip(r, 1-eps, 1+eps) A)`.
pub fn surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

struct SampleGrad {
    grads: Vec<Mat>,
    surrogate: f64,
    value_err2: f64,
    entropy: f64,
    ratio: f64,
}

fn sample_grad(
    params: &PolicyParameters,
    tr: &Transition,
    advantage: f64,
    ret: f64,
    cfg: &TrainConfig,
    scale: f64,
    dropout_seed: u64,
) -> Result<SampleGrad, UpdateError> {
    let g = forward_graph(params, &tr.state, Mode::Train { seed: dropout_seed })?;
    let out = &g.output;
    let (logp, entropy) = log_prob_entropy(out, tr.action)?;
    let ratio = (logp - tr.log_prob_old).exp();
    let surr = surrogate(ratio, advantage, cfg.clip_eps);
    let unclipped = ratio * advantage;
    // d(-surr)/dlogp is -rA on the unclipped branch, 0 where the clip is active.
    let d_logp = if unclipped <= surr {
        -unclipped * scale
    } else {
        0.0
    };
    let d_entropy = -cfg.entropy_coef * scale;
    let d_logits = logit_adjoint(&out.probs, &out.mask, tr.action, d_logp, d_entropy);
    let d_value = 2.0 * cfg.value_coef * (out.value - ret) * scale;
    let grads = backward(&g, &d_logits, d_value);
    Ok(SampleGrad {
        grads,
        surrogate: surr,
        value_err2: (out.value - ret).powi(2),
        entropy,
        ratio,
    })
}

/// `E` epochs of shuffled minibatches over `buffer`. Advantages are
/// standardized over the whole buffer first. `update_index` seeds shuffling
/// and dropout so repeated runs are identical.
pub fn ppo_update(
    params: &mut PolicyParameters,
    opt: &mut AdamW,
    buffer: &[Transition],
    advantages: &[f64],
    returns: &[f64],
    cfg: &TrainConfig,
    update_index: u64,
) -> Result<UpdateStats, UpdateError> {
    if buffer.is_empty() {
        return Err(UpdateError::EmptyBuffer);
    }
    let mut adv = advantages.to_vec();
    standardize(&mut adv);
    let n = buffer.len();
    let mb = cfg.minibatch.clamp(1, n);
    let mut rng =
        ChaCha8Rng::seed_from_u64(cfg.seed ^ update_index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut order: Vec<usize> = (0..n).collect();
    let mut acc = UpdateStats::default();
    let mut clipped = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(mb).enumerate() {
            let scale = 1.0 / chunk.len() as f64;
            let base = ((update_index * 1000 + epoch as u64) << 20) + ((b as u64) << 10);
            let snapshot: &PolicyParameters = params;
            let per_sample: Vec<Result<SampleGrad, UpdateError>> = chunk
                .par_iter()
                .map(|&i| {
                    sample_grad(
                        snapshot,
                        &buffer[i],
                        adv[i],
                        returns[i],
                        cfg,
                        scale,
                        base + i as u64,
                    )
                })
                .collect();
            let mut grads: Option<Vec<Mat>> = None;
            let mut loss = 0.0;
            for s in per_sample {
                let s = s?;
                loss += scale
                    * (-s.surrogate + cfg.value_coef * s.value_err2 - cfg.entropy_coef * s.entropy);
                acc.policy_loss -= s.surrogate;
                acc.value_loss += s.value_err2;
                acc.entropy += s.entropy;
                acc.mean_ratio += s.ratio;
                if (s.ratio - 1.0).abs() > cfg.clip_eps {
                    clipped += 1;
                }
                acc.samples += 1;
                match grads.as_mut() {
                    None => grads = Some(s.grads),
                    Some(g) => {
                        for (a, b) in g.iter_mut().zip(&s.grads) {
                            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
            if !loss.is_finite() {
                return Err(UpdateError::NonFiniteLoss);
            }
            let mut grads = grads.expect("non-empty minibatch");
            check_finite_grads(params, &grads)?;
            clip_global_norm(&mut grads, cfg.grad_clip_norm);
            let (actor_lr, critic_lr) = (cfg.actor_lr, cfg.critic_lr);
            opt.step(params, &grads, |name| {
                if PolicyParameters::is_critic_only(name) {
                    critic_lr
                } else {
                    actor_lr
                }
            });
        }
    }
    let m = acc.samples.max(1) as f64;
    acc.policy_loss /= m;
    acc.value_loss /= m;
    acc.entropy /= m;
    acc.mean_ratio /= m;
    acc.clip_frac = clipped as f64 / m;
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{forward, test_support::random_state, NetConfig};

    #[test]
    fn clip_arithmetic() {
        assert_eq!(surrogate(2.0, 1.0, 0.2), 1.2);
        assert!((surrogate(0.5, -1.0, 0.2) - -0.8).abs() < 1e-15);
        assert_eq!(surrogate(1.0, 0.7, 0.2), 0.7);
    }

    fn buffer(p: &PolicyParameters) -> Vec<Transition> {
        (0..6)
            .map(|i| {
                let state = random_state(3, 40 + i);
                let out = forward(p, &state, Mode::Rollout).unwrap();
                let action = (i % 3) as usize;
                Transition {
                    log_prob_old: out.probs[action].ln(),
                    value_old: out.value,
                    state,
                    action,
                    reward: if action == 0 { 1.0 } else { -1.0 },
                    terminal: true,
                }
            })
            .collect()
    }

    #[test]
    fn first_ratio_is_one_without_dropout() {
        let mut p =
            PolicyParameters::init(&NetConfig::with_gate_depth(8, 1, 2, 0.0, 2, 2)).unwrap();
        let buf = buffer(&p);
        let adv: Vec<f64> = buf.iter().map(|t| t.reward - t.value_old).collect();
        let ret: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        let cfg = TrainConfig {
            epochs: 1,
            minibatch: 6,
            actor_lr: 0.0,
            critic_lr: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(&p, cfg.weight_decay);
        let before = p.clone();
        let st = ppo_update(&mut p, &mut opt, &buf, &adv, &ret, &cfg, 0).unwrap();
        assert!((st.mean_ratio - 1.0).abs() < 1e-9);
        assert_eq!(st.clip_frac, 0.0);
        assert_eq!(p, before);
    }

    #[test]
    fn update_is_deterministic_and_moves_params() {
        let p0 = PolicyParameters::init(&NetConfig::with_gate_depth(8, 1, 2, 0.1, 2, 2)).unwrap();
        let buf = buffer(&p0);
        let adv: Vec<f64> = buf.iter().map(|t| t.reward - t.value_old).collect();
        let ret: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        let cfg = TrainConfig {
            minibatch: 4,
            horizon: 8,
            ..Default::default()
        };
        let run = || {
            let mut p = p0.clone();
            let mut opt = AdamW::new(&p, cfg.weight_decay);
            let st = ppo_update(&mut p, &mut opt, &buf, &adv, &ret, &cfg, 3).unwrap();
            (p, st)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert_ne!(a, p0);
        assert!((0.0..=1.0).contains(&sa.clip_frac));
        assert_eq!(sa.samples, 6 * cfg.epochs);
    }
}
