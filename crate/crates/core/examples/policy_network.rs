//! Run the actor-critic as a branching rule, inspect its decisions and
//! round-trip a checkpoint.

use tgbranch::bnb::{run, PolicyKind, RunConfig, RunStatus};
use tgbranch::milp::{generate_instance, validate_instance, GeneratorParams};
use tgbranch::net::{forward, load_checkpoint, save_checkpoint, Mode, NetConfig, PolicyParameters};
use tgbranch::ppo::NetPolicy;

fn main() {
    let cfg = NetConfig::new(32, 1, 4, 0.05, 0);
    let params = PolicyParameters::init(&cfg).unwrap();
    println!(
        "{} tensors, {} scalars",
        params.tensors.len(),
        params.num_scalars()
    );

    // First unit-cost set cover whose root relaxation is fractional.
    let inst = (0..)
        .map(|seed| {
            let mut gp = GeneratorParams::set_cover(50, 50, 0.1, seed);
            gp.coefficient_range = (1, 1);
            validate_instance(&generate_instance(&gp).unwrap()).unwrap()
        })
        .find(|inst| {
            let probe = RunConfig {
                node_budget: 1,
                ..RunConfig::default()
            };
            run(inst, &mut PolicyKind::MostFractional.build(0), &probe)
                .unwrap()
                .status
                != RunStatus::Optimal
        })
        .unwrap();

    let mut policy = NetPolicy::sampling(&params, 11);
    let stats = run(&inst, &mut policy, &RunConfig::default()).unwrap();
    println!(
        "sampled policy: status={} nodes={}",
        stats.status, stats.nodes_explored
    );
    for (t, r) in policy.records.iter().take(5).enumerate() {
        let out = forward(&params, &r.state, Mode::Rollout).unwrap();
        println!(
            "decision {t}: {} candidates, chose {} (p={:.3}), value {:+.4}",
            r.state.candidates.len(),
            r.action,
            r.log_prob.exp(),
            out.value
        );
    }

    let greedy = run(
        &inst,
        &mut NetPolicy::greedy(&params),
        &RunConfig::default(),
    )
    .unwrap();
    println!("greedy policy: nodes={}", greedy.nodes_explored);

    let path = std::env::temp_dir().join("tgbranch_example.ckpt");
    save_checkpoint(&params, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), params);
    println!("checkpoint round trip ok: {}", path.display());
    let _ = std::fs::remove_file(path);
}
