//! Win-rate tables and the statistics block.

use super::stats::{
    average_ranks, format_p, friedman, mean_ranks, wilcoxon_signed_rank, FriedmanResult,
    WilcoxonResult,
};
use super::{by_instance, routed_win_rate, sgm_nodes, sgm_pdi, EvalError, Metric, ResultRow};
use std::collections::BTreeSet;
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct WinLine {
    pub baseline: String,
    /// Wins on node count over instances where every run of the pair completed.
    pub win_nodes: Option<f64>,
    pub easy_instances: usize,
    /// Wins on PDI over the remaining instances.
    pub win_pdi: Option<f64>,
    pub hard_instances: usize,
    pub wilcoxon_nodes: Option<WilcoxonResult>,
    pub wilcoxon_pdi: Option<WilcoxonResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub focus: String,
    pub policies: Vec<String>,
    /// `(policy, SGM nodes, SGM PDI)` over all rows of the policy.
    pub overall: Vec<(String, f64, f64)>,
    pub wins: Vec<WinLine>,
    pub friedman: Option<FriedmanResult>,
    pub mean_ranks: Vec<(String, f64)>,
}

fn pct(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{:.2}", 100.0 * v))
}

fn wil(x: &Option<WilcoxonResult>) -> String {
    x.map_or("n/a".into(), |w| {
        format!("W+={} n={} p={}", w.w_plus, w.n, format_p(w.p))
    })
}

/// Compares `focus` against every other policy present in `rows`.
pub fn build_report(rows: &[ResultRow], focus: &str) -> Result<Report, EvalError> {
    let policies: Vec<String> = rows
        .iter()
        .map(|r| r.policy.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !policies.iter().any(|p| p == focus) {
        return Err(EvalError::Other(format!("policy {focus} not in results")));
    }
    let mut overall = Vec::new();
    for p in &policies {
        let mine: Vec<&ResultRow> = rows.iter().filter(|r| &r.policy == p).collect();
        overall.push((
            p.clone(),
            sgm_nodes(&mine.iter().map(|r| r.nodes as f64).collect::<Vec<_>>())?,
            sgm_pdi(&mine.iter().map(|r| r.pdi).collect::<Vec<_>>())?,
        ));
    }

    let mut wins = Vec::new();
    for b in policies.iter().filter(|p| *p != focus) {
        let t = routed_win_rate(rows, focus, b)?;
        let split =
            |m: Metric| -> Vec<_> { t.per_instance.iter().filter(|c| c.metric == m).collect() };
        let (easy, hard) = (split(Metric::Nodes), split(Metric::Pdi));
        let rate = |v: &[&super::InstanceComparison]| {
            (!v.is_empty()).then(|| v.iter().filter(|c| c.win).count() as f64 / v.len() as f64)
        };
        let test = |v: &[&super::InstanceComparison]| {
            wilcoxon_signed_rank(&v.iter().map(|c| c.a - c.b).collect::<Vec<_>>()).ok()
        };
        wins.push(WinLine {
            baseline: b.clone(),
            win_nodes: rate(&easy),
            easy_instances: easy.len(),
            win_pdi: rate(&hard),
            hard_instances: hard.len(),
            wilcoxon_nodes: test(&easy),
            wilcoxon_pdi: test(&hard),
        });
    }

    // Within-instance ranks on the routed metric across all policies.
    let groups: Vec<_> = policies.iter().map(|p| by_instance(rows, p)).collect();
    let mut rank_rows = Vec::new();
    let focus_idx = policies
        .iter()
        .position(|p| p == focus)
        .expect("focus present");
    for inst in groups[focus_idx].keys() {
        let per: Option<Vec<&Vec<&ResultRow>>> = groups.iter().map(|g| g.get(inst)).collect();
        let Some(per) = per else { continue };
        let metric = if per.iter().all(|rs| rs.iter().all(|r| r.completed())) {
            Metric::Nodes
        } else {
            Metric::Pdi
        };
        let vals: Vec<f64> = per
            .iter()
            .map(|rs| metric.sgm_of(rs))
            .collect::<Result<_, _>>()?;
        rank_rows.push(average_ranks(&vals));
    }
    let friedman = friedman(&rank_rows).ok();
    let mean_ranks = if rank_rows.is_empty() {
        Vec::new()
    } else {
        policies
            .iter()
            .cloned()
            .zip(mean_ranks(&rank_rows))
            .collect()
    };
    Ok(Report {
        focus: focus.to_string(),
        policies,
        overall,
        wins,
        friedman,
        mean_ranks,
    })
}

impl Report {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Evaluation report\n");
        let _ = writeln!(s, "## Per-instance dominance of {}\n", self.focus);
        let _ = writeln!(s, "| Baseline | % win (Nnodes) | % win (PDI) |");
        let _ = writeln!(s, "|---|---:|---:|");
        for w in &self.wins {
            let _ = writeln!(
                s,
                "| {} | {} ({} inst.) | {} ({} inst.) |",
                w.baseline,
                pct(w.win_nodes),
                w.easy_instances,
                pct(w.win_pdi),
                w.hard_instances
            );
        }
        let _ = writeln!(s, "\n## Shifted geometric means\n");
        let _ = writeln!(s, "| Policy | SGM Nnodes (S=100) | SGM PDI (S=0) |");
        let _ = writeln!(s, "|---|---:|---:|");
        for (p, n, d) in &self.overall {
            let _ = writeln!(s, "| {p} | {n:.2} | {d:.4} |");
        }
        let _ = writeln!(s, "\n## Statistics\n");
        let _ = writeln!(
            s,
            "Friedman chi2 (df), p: {}\n",
            self.friedman.map_or("n/a".into(), |f| f.formatted())
        );
        let _ = writeln!(s, "| Policy | Mean rank |");
        let _ = writeln!(s, "|---|---:|");
        for (p, r) in &self.mean_ranks {
            let _ = writeln!(s, "| {p} | {r:.3} |");
        }
        let _ = writeln!(
            s,
            "\nOne-sided Wilcoxon signed-rank ({} minus baseline, alternative: less):\n",
            self.focus
        );
        let _ = writeln!(s, "| Baseline | Nnodes (easy) | PDI (hard) |");
        let _ = writeln!(s, "|---|---|---|");
        for w in &self.wins {
            let _ = writeln!(
                s,
                "| {} | {} | {} |",
                w.baseline,
                wil(&w.wilcoxon_nodes),
                wil(&w.wilcoxon_pdi)
            );
        }
        s
    }

    pub fn wins_csv(&self) -> String {
        let mut s = String::from("baseline,win_nodes,easy_instances,win_pdi,hard_instances\n");
        let f = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
        for w in &self.wins {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                w.baseline,
                f(w.win_nodes),
                w.easy_instances,
                f(w.win_pdi),
                w.hard_instances
            );
        }
        s
    }

    pub fn stats_csv(&self) -> String {
        let mut s = String::from("policy,sgm_nodes,sgm_pdi,mean_rank\n");
        for (p, n, d) in &self.overall {
            let r = self
                .mean_ranks
                .iter()
                .find(|(q, _)| q == p)
                .map_or(String::new(), |(_, r)| format!("{r:.6}"));
            let _ = writeln!(s, "{p},{n:.6},{d:.6e},{r}");
        }
        if let Some(f) = self.friedman {
            let _ = writeln!(s, "# friedman_chi2={:.6},df={},p={:.6e}", f.chi2, f.df, f.p);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnb::RunStatus;

    fn rows() -> Vec<ResultRow> {
        let mut v = Vec::new();
        for i in 0..6 {
            for (p, n) in [
                ("TGPPO", 10 + i),
                ("RANDOM", 30 + 2 * i),
                ("PSCOST", 12 + i),
            ] {
                v.push(ResultRow {
                    instance: format!("inst{i}"),
                    seed: 0,
                    policy: p.into(),
                    nodes: n,
                    pdi: 0.5,
                    status: RunStatus::Optimal,
                    clock: 1.0,
                });
            }
        }
        v
    }

    #[test]
    fn report_layout() {
        let r = build_report(&rows(), "TGPPO").unwrap();
        assert_eq!(r.wins.len(), 2);
        assert!(r
            .wins
            .iter()
            .all(|w| w.win_nodes == Some(1.0) && w.win_pdi.is_none()));
        let md = r.to_markdown();
        assert!(md.contains("| Baseline | % win (Nnodes) | % win (PDI) |"));
        assert!(md.contains("| RANDOM | 100.00 (6 inst.) | n/a (0 inst.) |"));
        let f = r.friedman.unwrap();
        assert_eq!(f.df, 2);
        assert!((f.chi2 - 12.0).abs() < 1e-9);
        assert!(r.wins[0].wilcoxon_nodes.unwrap().p < 0.05);
        assert!(r.wins_csv().starts_with("baseline,win_nodes"));
    }
}
