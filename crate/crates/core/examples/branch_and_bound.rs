//! Solve a two-variable knapsack with every baseline branching rule and
//! check the result against enumeration.

use tgbranch::bnb::{format_event_log, run, PolicyKind, RunConfig};
use tgbranch::milp::{
    brute_force_solve, validate_instance, BruteForceOutcome, MilpInstance, RowSense,
};

fn main() {
    // min -3x1 - 4x2  s.t.  2x1 + 3x2 <= 4,  x binary
    let mut inst = MilpInstance::new("knapsack2", 2);
    inst.objective = vec![-3.0, -4.0];
    inst.upper_bounds = vec![1.0, 1.0];
    inst.is_integer = vec![true, true];
    inst.add_row(&[(0, 2.0), (1, 3.0)], RowSense::Le, 4.0);
    let inst = validate_instance(&inst).expect("valid instance");

    let cfg = RunConfig {
        cutoff: Some(-4.0),
        ..RunConfig::default()
    };
    let stats = run(&inst, &mut PolicyKind::MostFractional.build(0), &cfg).unwrap();
    println!(
        "MOST_FRACTIONAL with cutoff -4: status={} nodes={}",
        stats.status, stats.nodes_explored
    );
    print!("{}", format_event_log(&stats.events));

    let reference = match brute_force_solve(&inst, 1 << 10).unwrap() {
        BruteForceOutcome::Optimal { value, .. } => value,
        other => panic!("unexpected {other:?}"),
    };
    println!("enumerated optimum {reference}");
    for kind in PolicyKind::ALL {
        let s = run(&inst, &mut kind.build(7), &RunConfig::default()).unwrap();
        println!(
            "{:16} status={} nodes={:3} primal={} pdi={:.4}",
            kind.as_str(),
            s.status,
            s.nodes_explored,
            s.primal_bound,
            s.pdi
        );
        assert!((s.primal_bound - reference).abs() < 1e-6);
    }
}
