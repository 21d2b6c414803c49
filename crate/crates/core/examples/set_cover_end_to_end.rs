//! Train on small set-cover instances, then compare against RANDOM on
//! held-out ones.
//!
//! Knobs (environment): `TRAIN_N`, `TEST_N`, `EPISODES`, `D_H`, `ROWS`,
//! `COLS`, `DENSITY`, `SEED`. Run with `--release`; the defaults take a few minutes.

use std::time::Instant;
use tgbranch::bnb::{PolicyKind, RunConfig, RunStatus};
use tgbranch::config::CutoffMode;
use tgbranch::eval::{evaluate, sgm_nodes, win_rate, EvalPolicy, Metric};
use tgbranch::milp::{generate_instance, GeneratorParams};
use tgbranch::net::{NetConfig, PolicyParameters};
use tgbranch::pipeline::{acquire_baselines, augment, NamedInstance};
use tgbranch::ppo::{train, TrainConfig};
use tgbranch::rewards::BaselineManifest;

fn knob<T: std::str::FromStr>(name: &str, default: T) -> T {
    std::env::var(name)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

/// Generated instances whose root relaxation is fractional, so branching matters.
fn instances(
    first_seed: u64,
    n: usize,
    rows: usize,
    cols: usize,
    density: f64,
) -> Vec<NamedInstance> {
    let mut out = Vec::new();
    let mut seed = first_seed;
    while out.len() < n {
        let mut p = GeneratorParams::set_cover(rows, cols, density, seed);
        p.coefficient_range = (1, 1);
        let mut inst = generate_instance(&p).expect("generate");
        inst.name = format!("sc_{seed:04}");
        seed += 1;
        let named = NamedInstance::new(inst, None).expect("valid");
        let probe = tgbranch::bnb::run(
            &named.instance,
            &mut PolicyKind::MostFractional.build(0),
            &RunConfig {
                node_budget: 1,
                decision_budget: 1,
                ..RunConfig::default()
            },
        )
        .expect("probe");
        if probe.status != RunStatus::Optimal {
            out.push(named);
        }
    }
    out
}

fn main() {
    let (rows, cols, density) = (knob("ROWS", 50), knob("COLS", 50), knob("DENSITY", 0.1));
    let train_n = knob("TRAIN_N", 20);
    let test_n = knob("TEST_N", 10);
    let episodes = knob("EPISODES", 300);
    let d_h = knob("D_H", 32);
    let seeds: Vec<u64> = (0..5).collect();
    let run_cfg = RunConfig {
        node_budget: 5000,
        decision_budget: 5000,
        ..RunConfig::default()
    };

    let t0 = Instant::now();
    let train_set = instances(1000, train_n, rows, cols, density);
    let test_set = instances(5000, test_n, rows, cols, density);
    let train_items = augment(&train_set, &seeds, CutoffMode::None).unwrap();
    let test_items = augment(&test_set, &seeds, CutoffMode::None).unwrap();
    let mut manifest = BaselineManifest::in_memory();
    acquire_baselines(&train_items, &run_cfg, &mut manifest, 8).unwrap();
    let pool = tgbranch::pipeline::training_pool(&train_items, &manifest).unwrap();
    println!("data + baselines: {:.1}s", t0.elapsed().as_secs_f64());

    let params = PolicyParameters::init(&NetConfig::with_gate_depth(
        d_h,
        1,
        2,
        0.0,
        2,
        knob("SEED", 0),
    ))
    .unwrap();
    let cfg = TrainConfig {
        episodes,
        rollouts_per_update: knob("ROLLOUTS", 4),
        minibatch: 64,
        horizon: 512,
        actor_lr: knob("LR", 1e-3),
        critic_lr: knob("LR", 1e-3) * 0.5,
        entropy_coef: knob("ENT", 3e-3),
        seed: knob("SEED", 0),
        ..TrainConfig::default()
    };
    let t1 = Instant::now();
    let out = train(&pool, params, &cfg, &run_cfg, |row, _| {
        if row.episode % 20 == 0 {
            println!(
                "ep {:4} {} s{} nodes {:5} reward {:+.3} pi {:+.4} ent {:.3}",
                row.episode,
                row.instance,
                row.seed,
                row.nodes,
                row.sum_reward,
                row.update.policy_loss,
                row.update.entropy
            );
        }
    })
    .unwrap();
    println!(
        "training: {:.1}s, {} updates",
        t1.elapsed().as_secs_f64(),
        out.updates
    );

    let policies = [
        EvalPolicy::Learned(&out.params),
        EvalPolicy::Baseline(PolicyKind::Random),
        EvalPolicy::Baseline(PolicyKind::MostFractional),
        EvalPolicy::Baseline(PolicyKind::RelpscostLike),
    ];
    let rows_out = evaluate(&test_items, &policies, &run_cfg, 8).unwrap();
    for p in &policies {
        let name = p.name();
        let nodes: Vec<f64> = rows_out
            .iter()
            .filter(|r| r.policy == name)
            .map(|r| r.nodes as f64)
            .collect();
        println!("{name:16} SGM nodes {:8.2}", sgm_nodes(&nodes).unwrap());
    }
    let w = win_rate(&rows_out, "TGPPO", "RANDOM", Metric::Nodes).unwrap();
    println!(
        "TGPPO wins vs RANDOM on {:.0}% of held-out instances",
        100.0 * w.fraction
    );
    println!("total: {:.1}s", t0.elapsed().as_secs_f64());
}
