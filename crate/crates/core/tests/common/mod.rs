#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgbranch::bnb::{run, PolicyKind, RunConfig, RunStatus};
use tgbranch::features::{StateFeatures, CANDIDATE_DIM, NODE_DIM, TREE_DIM};
use tgbranch::milp::{generate_instance, GeneratorParams};
use tgbranch::pipeline::NamedInstance;

pub fn random_state(n: usize, seed: u64) -> StateFeatures {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
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

/// Unit-cost set-cover instances whose root relaxation is fractional, taking
/// generator seeds upward from `first_seed`.
pub fn branching_set_covers(
    first_seed: u64,
    n: usize,
    rows: usize,
    cols: usize,
    density: f64,
) -> Vec<NamedInstance> {
    let probe = RunConfig {
        node_budget: 1,
        ..RunConfig::default()
    };
    let mut out = Vec::new();
    let mut seed = first_seed;
    while out.len() < n {
        let mut p = GeneratorParams::set_cover(rows, cols, density, seed);
        p.coefficient_range = (1, 1);
        let mut inst = generate_instance(&p).expect("generate");
        inst.name = format!("sc_{seed:04}");
        seed += 1;
        let named = NamedInstance::new(inst, None).expect("valid");
        let root = run(
            &named.instance,
            &mut PolicyKind::MostFractional.build(0),
            &probe,
        )
        .expect("probe");
        if root.status != RunStatus::Optimal {
            out.push(named);
        }
    }
    out
}
