//! Metrics, significance tests and the markdown report on a synthetic grid
//! of results.

use tgbranch::bnb::RunStatus;
use tgbranch::eval::{
    build_report, format_results, friedman, sgm, wilcoxon_signed_rank, ResultRow,
};

fn main() {
    println!(
        "SGM([100, 400], shift 100) = {:.4}",
        sgm(&[100.0, 400.0], 100.0).unwrap()
    );
    let f = friedman(&[
        vec![1.0, 2.0, 3.0],
        vec![1.0, 2.0, 3.0],
        vec![1.0, 2.0, 3.0],
        vec![1.0, 2.0, 3.0],
    ])
    .unwrap();
    println!(
        "Friedman on 4 identical rankings of 3 policies: {}",
        f.formatted()
    );
    let w = wilcoxon_signed_rank(&[-1.0, -2.0, -3.0, -4.0, -5.0]).unwrap();
    println!(
        "Wilcoxon, five negative differences: W+={} p={:.5}",
        w.w_plus, w.p
    );

    // Eight instances, three seeds; the last two hit the budget.
    let mut rows = Vec::new();
    for i in 0..8u64 {
        for seed in 0..3u64 {
            let hard = i >= 6;
            for (policy, base) in [("TGPPO", 20.0), ("RANDOM", 34.0), ("PSCOST", 22.0)] {
                let wobble = ((i * 7 + seed * 3) % 5) as f64;
                let nodes = (base + 3.0 * i as f64 + wobble) as u64;
                rows.push(ResultRow {
                    instance: format!("inst{i}"),
                    seed,
                    policy: policy.into(),
                    nodes: if hard { 5000 } else { nodes },
                    pdi: if hard {
                        nodes as f64 / 10.0
                    } else {
                        nodes as f64 / 100.0
                    },
                    status: if hard {
                        RunStatus::TimeLimit
                    } else {
                        RunStatus::Optimal
                    },
                    clock: 1.0,
                });
            }
        }
    }
    println!("\nresults.csv (head):");
    for line in format_results(&rows).lines().take(4) {
        println!("  {line}");
    }
    let report = build_report(&rows, "TGPPO").unwrap();
    println!("\n{}", report.to_markdown());
}
