//! Actor-critic network, its differentiation substrate and checkpoints.

pub mod checkpoint;
mod model;
pub mod tape;

pub use checkpoint::{load as load_checkpoint, save as save_checkpoint, CheckpointError};
pub use model::{
    backward, forward, forward_graph, log_prob_entropy, masked_softmax, ForwardGraph, Mode,
    NamedTensor, NetConfig, NetError, PolicyOutput, PolicyParameters, FFN_MULT, TREE_INPUT_DIM,
};
pub use tape::Mat;

/// Adjoint of `d_logp * ln p[action] + d_entropy * H(p)` with respect to the logits.
pub fn logit_adjoint(
    probs: &[f64],
    mask: &[bool],
    action: usize,
    d_logp: f64,
    d_entropy: f64,
) -> Vec<f64> {
    let entropy = -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>();
    probs
        .iter()
        .zip(mask)
        .enumerate()
        .map(|(j, (&p, &m))| {
            if m {
                return 0.0;
            }
            let onehot = if j == action { 1.0 } else { 0.0 };
            let dlogp = onehot - p;
            let dh = if p > 0.0 {
                -p * (p.ln() + entropy)
            } else {
                0.0
            };
            d_logp * dlogp + d_entropy * dh
        })
        .collect()
}

/// Fails with the first tensor whose gradient has a non-finite entry.
pub fn check_finite_grads(params: &PolicyParameters, grads: &[Mat]) -> Result<(), NetError> {
    for (t, g) in params.tensors.iter().zip(grads) {
        if !g.all_finite() {
            return Err(NetError::NonFiniteGrad(t.name.clone()));
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod test_support {
    use crate::features::{StateFeatures, CANDIDATE_DIM, NODE_DIM, TREE_DIM};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_state(n: usize, seed: u64) -> StateFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut row = || {
            let mut r = [0.0; CANDIDATE_DIM];
            r.iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
            r
        };
        let candidates: Vec<_> = (0..n).map(|_| row()).collect();
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
}

#[cfg(test)]
mod tests {
    use super::test_support::random_state;
    use super::*;

    fn tiny(seed: u64) -> PolicyParameters {
        PolicyParameters::init(&NetConfig::with_gate_depth(8, 1, 2, 0.0, 2, seed)).unwrap()
    }

    /// Random parameters with nonzero biases, so no unit sits exactly on a ReLU kink.
    fn jittered(seed: u64) -> PolicyParameters {
        use rand::{Rng, SeedableRng};
        let mut p = tiny(seed);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
        for t in p.tensors.iter_mut() {
            t.value
                .data
                .iter_mut()
                .for_each(|v| *v += rng.gen_range(-0.2..0.2));
        }
        p
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let cfg = NetConfig::new(64, 2, 4, 0.1, 9);
        let a = PolicyParameters::init(&cfg).unwrap();
        assert_eq!(a, PolicyParameters::init(&cfg).unwrap());
        assert_eq!(a.get("cand_embed.weight").unwrap().shape(), (64, 25));
        assert_eq!(a.get("tree_embed.weight").unwrap().shape(), (64, 61));
        assert_eq!(a.get("fusion.weight").unwrap().shape(), (64, 128));
        assert_eq!(a.get("actor.layer2.weight").unwrap().shape(), (1, 16));
    }

    #[test]
    fn indivisible_heads_rejected() {
        let cfg = NetConfig::new(8, 1, 3, 0.0, 0);
        assert!(matches!(
            PolicyParameters::init(&cfg),
            Err(NetError::BadConfig(_))
        ));
    }

    #[test]
    fn singleton_has_unit_probability() {
        let p = tiny(1);
        let out = forward(&p, &random_state(1, 2), Mode::Rollout).unwrap();
        assert_eq!(out.probs, vec![1.0]);
        assert_eq!(log_prob_entropy(&out, 0).unwrap(), (0.0, 0.0));
        assert_eq!(log_prob_entropy(&out, 1), Err(NetError::MaskedAction(1)));
    }

    #[test]
    fn uniform_log_prob_and_entropy() {
        let (probs, h) = masked_softmax(&[0.3; 4], &[false; 4]);
        let out = PolicyOutput {
            logits: vec![0.3; 4],
            probs,
            value: 0.0,
            entropy: h,
            mask: vec![false; 4],
        };
        let (lp, h) = log_prob_entropy(&out, 2).unwrap();
        assert!((lp - 0.25f64.ln()).abs() < 1e-12);
        assert!((h - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn permutation_equivariance() {
        let p = tiny(3);
        let s = random_state(4, 7);
        let perm = [2, 0, 3, 1];
        let a = forward(&p, &s, Mode::Rollout).unwrap();
        let b = forward(&p, &s.permuted(&perm), Mode::Rollout).unwrap();
        for (i, &src) in perm.iter().enumerate() {
            assert!((b.logits[i] - a.logits[src]).abs() < 1e-9);
        }
        assert!((a.value - b.value).abs() < 1e-9);
    }

    #[test]
    fn padding_invariance() {
        let p = tiny(4);
        let s = random_state(3, 8);
        let a = forward(&p, &s, Mode::Rollout).unwrap();
        let mut padded = s.clone();
        padded.pad_mask = s.mask_for_width(8);
        let b = forward(&p, &padded, Mode::Rollout).unwrap();
        assert_eq!(b.probs.len(), 8);
        for i in 0..3 {
            assert!((a.logits[i] - b.logits[i]).abs() < 1e-9);
            assert!((a.probs[i] - b.probs[i]).abs() < 1e-9);
        }
        assert!(b.probs[3..].iter().all(|&p| p == 0.0));
        assert!((a.value - b.value).abs() < 1e-9);
    }

    #[test]
    fn dropout_only_in_train_mode() {
        let cfg = NetConfig::with_gate_depth(8, 1, 2, 0.3, 2, 1);
        let p = PolicyParameters::init(&cfg).unwrap();
        let s = random_state(3, 1);
        assert_eq!(
            forward(&p, &s, Mode::Rollout).unwrap(),
            forward(&p, &s, Mode::Rollout).unwrap()
        );
        let t = forward(&p, &s, Mode::Train { seed: 5 }).unwrap();
        assert_ne!(t, forward(&p, &s, Mode::Rollout).unwrap());
        assert_eq!(t, forward(&p, &s, Mode::Train { seed: 5 }).unwrap());
    }

    /// `-A ln p(a) + (V - R)^2 - c H`.
    fn scalar_loss(p: &PolicyParameters, s: &crate::features::StateFeatures) -> f64 {
        let out = forward(p, s, Mode::Rollout).unwrap();
        -0.7 * out.probs[1].ln() + (out.value - 0.4).powi(2) - 0.05 * out.entropy
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20u64 {
            let params = jittered(seed);
            let s = random_state(3, 100 + seed);
            let g = forward_graph(&params, &s, Mode::Rollout).unwrap();
            let out = &g.output;
            let dl = logit_adjoint(&out.probs, &out.mask, 1, -0.7, -0.05);
            let grads = backward(&g, &dl, 2.0 * (out.value - 0.4));
            check_finite_grads(&params, &grads).unwrap();
            let h = 1e-4;
            for (ti, t) in params.tensors.iter().enumerate() {
                for k in 0..t.value.data.len() {
                    let mut plus = params.clone();
                    plus.tensors[ti].value.data[k] += h;
                    let mut minus = params.clone();
                    minus.tensors[ti].value.data[k] -= h;
                    let numeric = (scalar_loss(&plus, &s) - scalar_loss(&minus, &s)) / (2.0 * h);
                    let analytic = grads[ti].data[k];
                    let err = (analytic - numeric).abs() / analytic.abs().max(1.0);
                    assert!(
                        err < 1e-4,
                        "seed {seed} {}[{k}]: {analytic} vs {numeric}",
                        t.name
                    );
                }
            }
        }
    }

    #[test]
    fn zero_final_layer_blocks_policy_gradient() {
        let mut p = tiny(6);
        p.get_mut("actor.layer1.weight")
            .unwrap()
            .data
            .iter_mut()
            .for_each(|v| *v = 0.0);
        let s = random_state(3, 6);
        let g = forward_graph(&p, &s, Mode::Rollout).unwrap();
        let dl = logit_adjoint(&g.output.probs, &g.output.mask, 0, 1.0, 0.0);
        let grads = backward(&g, &dl, 0.0);
        let wc = p.index_of("cand_embed.weight").unwrap();
        assert!(grads[wc].data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn value_loss_reaches_only_critic_and_front_end() {
        let p = jittered(7);
        let s = random_state(3, 7);
        let g = forward_graph(&p, &s, Mode::Rollout).unwrap();
        let grads = backward(&g, &[0.0; 3], 1.0);
        for (t, gr) in p.tensors.iter().zip(&grads) {
            if t.name.starts_with("actor.") {
                assert!(gr.data.iter().all(|&v| v == 0.0), "{}", t.name);
            }
        }
        let wc = p.index_of("cand_embed.weight").unwrap();
        assert!(grads[wc].data.iter().any(|&v| v != 0.0));
    }
}
