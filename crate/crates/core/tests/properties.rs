//! Property tests for invariants that hold for every input.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use tgbranch::bnb::{run, PolicyKind, RunConfig, RunStatus};
use tgbranch::eval::{
    average_ranks, friedman, sgm, wilcoxon_exact_less, wilcoxon_normal_less, win_rate, Metric,
    ResultRow, SearchSpace,
};
use tgbranch::milp::{
    brute_force_solve, generate_instance, permute_columns, read_native, validate_instance,
    write_native, BruteForceError, Family, GeneratorParams,
};
use tgbranch::net::{checkpoint, forward, masked_softmax, Mode, NetConfig, PolicyParameters};
use tgbranch::ppo::{gae, standardize};

fn rows_for(policy: &str, nodes: &[u64]) -> Vec<ResultRow> {
    nodes
        .iter()
        .enumerate()
        .map(|(i, &n)| ResultRow {
            instance: format!("i{}", i / 2),
            seed: (i % 2) as u64,
            policy: policy.into(),
            nodes: n,
            pdi: n as f64 / 10.0,
            status: RunStatus::Optimal,
            clock: 0.0,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sgm_lies_between_min_and_max(xs in prop::collection::vec(0.0f64..1e6, 1..40), shift in 0.0f64..200.0) {
        let v = sgm(&xs, shift).unwrap();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo && v <= hi, "{v} outside [{lo}, {hi}]");
    }

    #[test]
    fn sgm_of_constant_is_exact(x in 0.0f64..1e6, n in 1usize..30, shift in 0.0f64..200.0) {
        prop_assert_eq!(sgm(&vec![x; n], shift).unwrap(), x);
    }

    #[test]
    fn policy_never_beats_itself(nodes in prop::collection::vec(1u64..10_000, 2..30)) {
        let nodes = if nodes.len() % 2 == 1 { &nodes[1..] } else { &nodes[..] };
        let mut rows = rows_for("A", nodes);
        rows.extend(rows_for("B", nodes));
        prop_assert_eq!(win_rate(&rows, "A", "B", Metric::Nodes).unwrap().fraction, 0.0);
        prop_assert_eq!(win_rate(&rows, "A", "B", Metric::Pdi).unwrap().fraction, 0.0);
    }

    #[test]
    fn friedman_ignores_instance_order(
        table in prop::collection::vec(prop::collection::vec(0.0f64..100.0, 4), 3..12),
        rot in 0usize..12,
    ) {
        let ranks: Vec<Vec<f64>> = table.iter().map(|r| average_ranks(r)).collect();
        let mut shuffled = ranks.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        match (friedman(&ranks), friedman(&shuffled)) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a.chi2 - b.chi2).abs() < 1e-9);
                prop_assert!((a.p - b.p).abs() < 1e-12);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "one order failed and the other did not"),
        }
    }

    #[test]
    fn wilcoxon_normal_tracks_exact_at_twelve(signs in prop::collection::vec(any::<bool>(), 12)) {
        let ranks: Vec<f64> = (1..=12).map(f64::from).collect();
        let w: f64 = ranks.iter().zip(&signs).filter(|(_, &s)| s).map(|(r, _)| r).sum();
        let exact = wilcoxon_exact_less(&ranks, w);
        let normal = wilcoxon_normal_less(&ranks, w);
        prop_assert!((exact - normal).abs() < 0.02, "W+={w}: exact {exact} normal {normal}");
    }

    #[test]
    fn gae_without_discounting_is_monte_carlo(
        steps in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40),
        bootstrap in -5.0f64..5.0,
        cut in 0usize..40,
    ) {
        let rewards: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let values: Vec<f64> = steps.iter().map(|s| s.1).collect();
        let mut terminals = vec![false; steps.len()];
        if cut < steps.len() {
            terminals[cut] = true;
        }
        let (adv, ret) = gae(&rewards, &values, &terminals, bootstrap, 1.0, 1.0);
        // Monte-Carlo return: rewards to the next terminal, plus the bootstrap if none.
        for t in 0..steps.len() {
            let mut g = 0.0;
            let mut k = t;
            loop {
                g += rewards[k];
                if terminals[k] {
                    break;
                }
                k += 1;
                if k == steps.len() {
                    g += bootstrap;
                    break;
                }
            }
            prop_assert!((ret[t] - g).abs() < 1e-9);
            prop_assert!((adv[t] - (g - values[t])).abs() < 1e-9);
        }
    }

    #[test]
    fn standardized_batch_has_unit_moments(mut xs in prop::collection::vec(-100.0f64..100.0, 2..200)) {
        let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-2);
        standardize(&mut xs);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((sd - 1.0).abs() <= 1e-6, "sd {sd}");
    }

    #[test]
    fn sampled_configs_stay_in_space(seed in any::<u64>()) {
        let space = SearchSpace::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            prop_assert!(space.contains(&space.sample(&mut rng)));
        }
    }

    #[test]
    fn masked_softmax_normalizes(logits in prop::collection::vec(-50.0f64..50.0, 1..20), pad in 0usize..5) {
        let n = logits.len();
        let mut all = logits.clone();
        all.extend(std::iter::repeat(0.0).take(pad));
        let mask: Vec<bool> = (0..n + pad).map(|i| i >= n).collect();
        let (p, h) = masked_softmax(&all, &mask);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p[n..].iter().all(|&q| q == 0.0));
        prop_assert!(h >= -1e-12 && h <= (n as f64).ln() + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn column_permutation_preserves_optimum(seed in 0u64..10_000, perm_seed in 0u64..1000, fam in 0usize..3) {
        let family = [Family::SetCover, Family::MultiKnapsack, Family::MixedRandom][fam];
        let p = GeneratorParams { family, rows: 3, cols: 7, density: 0.5, coefficient_range: (1, 9), seed };
        let inst = validate_instance(&generate_instance(&p).unwrap()).unwrap();
        let perm = validate_instance(&permute_columns(&inst, perm_seed)).unwrap();
        let (a, b) = match (brute_force_solve(&inst, 1 << 16), brute_force_solve(&perm, 1 << 16)) {
            (Ok(a), Ok(b)) => (a.value(), b.value()),
            (Err(BruteForceError::LimitExceeded { .. }), _) => return Ok(()),
            (x, y) => return Err(TestCaseError::fail(format!("{x:?} / {y:?}"))),
        };
        match (a, b) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
            (x, y) => prop_assert_eq!(x, y),
        }
        let s = run(&perm, &mut PolicyKind::Pscost.build(perm_seed), &RunConfig::default()).unwrap();
        if let Some(x) = a {
            prop_assert!((s.primal_bound - x).abs() < 1e-6);
        }
    }

    #[test]
    fn native_format_round_trips(seed in any::<u64>(), fam in 0usize..3) {
        let family = [Family::SetCover, Family::MultiKnapsack, Family::MixedRandom][fam];
        let p = GeneratorParams { family, rows: 4, cols: 9, density: 0.4, coefficient_range: (-5, 9), seed };
        if let Ok(inst) = generate_instance(&p) {
            let text = write_native(&inst);
            prop_assert_eq!(read_native(&text).unwrap(), inst);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact(seed in any::<u64>(), d in 0usize..3) {
        let cfg = NetConfig::new([8, 16, 24][d], 1, 2, 0.1, seed);
        let p = PolicyParameters::init(&cfg).unwrap();
        let back = checkpoint::decode(&checkpoint::encode(&p)).unwrap();
        let s = common::random_state(4, seed);
        let (a, b) = (forward(&p, &s, Mode::Rollout).unwrap(), forward(&back, &s, Mode::Rollout).unwrap());
        prop_assert_eq!(a.logits, b.logits);
        prop_assert_eq!(back, p);
    }
}
