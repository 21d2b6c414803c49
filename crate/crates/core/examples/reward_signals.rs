//! Step and terminal rewards of the three signals for a few search outcomes.

use tgbranch::bnb::RunStatus;
use tgbranch::rewards::{h3_weights, BaselineStats, RewardSignal, RewardState};

fn main() {
    let bs = BaselineStats {
        instance: "demo".into(),
        seed: 0,
        baseline_nodes: 50,
        gap0: 0.4,
        pdi0: 12.0,
        status: RunStatus::Optimal,
    };
    let w = h3_weights(bs.baseline_nodes);
    println!(
        "H3 weights for B=50: nodes {:.3} gap {:.3} pdi {:.3} pace {:.3} (difficulty {:.3})",
        w.nodes, w.gap, w.pdi, w.pace, w.difficulty
    );

    let step = RewardState {
        t: 3,
        nodes_prev: 10.0,
        nodes: 12.0,
        gap_prev: 0.30,
        gap: 0.25,
        gap_start: 0.4,
        pdi_prev: 4.0,
        pdi: 4.6,
        tau: 0.2,
        open_prev: 4.0,
        open: 5.0,
    };
    println!(
        "{:>6} {:>10} {:>14} {:>14}",
        "signal", "step", "terminal(40)", "terminal(200)"
    );
    for signal in RewardSignal::ALL {
        let done = RewardState { gap: 0.0, ..step };
        println!(
            "{:>6} {:>+10.5} {:>+14.5} {:>+14.5}",
            signal.to_string(),
            signal.step(&step, &bs),
            signal.terminal(Some(RunStatus::Optimal), 40.0, &done, &bs),
            signal.terminal(Some(RunStatus::Optimal), 200.0, &done, &bs),
        );
    }
}
