//! Instance-normalized reward signals.
//!
//! Every signal is normalized by statistics of a baseline run on the same
//! (instance, seed): its node count `B`, its initial gap and its PDI. Step
//! rewards are bounded in `[-1, 1]`; terminal rewards are not clipped.

mod baseline;

pub use baseline::{
    acquire_baseline, BaselineError, BaselineManifest, BaselineStats, MANIFEST_HEADER,
};

use crate::bnb::{Observation, RunStatus};
use std::fmt;
use std::str::FromStr;

/// `tanh(s * x)`.
pub fn tanh_s(s: f64, x: f64) -> f64 {
    (s * x).tanh()
}

/// `min(a / max(b, 1e-12), c)`.
pub fn ratio_c(a: f64, b: f64, c: f64) -> f64 {
    (a / b.max(1e-12)).min(c)
}

fn safe_den(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1e-12
    } else {
        x
    }
}

const H2_BETA: f64 = 1.5;
const H2_RHO: f64 = 0.7;
const S_CAP: f64 = 3.0;

/// Observables around one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardState {
    /// Decision index of the transition; 0 for the first.
    pub t: usize,
    pub nodes_prev: f64,
    pub nodes: f64,
    pub gap_prev: f64,
    pub gap: f64,
    /// Gap at the start of this episode.
    pub gap_start: f64,
    pub pdi_prev: f64,
    pub pdi: f64,
    pub tau: f64,
    pub open_prev: f64,
    pub open: f64,
}

impl RewardState {
    pub fn from_observations(
        t: usize,
        prev: &Observation,
        cur: &Observation,
        gap_start: f64,
    ) -> Self {
        Self {
            t,
            nodes_prev: prev.nodes_explored as f64,
            nodes: cur.nodes_explored as f64,
            gap_prev: prev.gap,
            gap: cur.gap,
            gap_start,
            pdi_prev: prev.pdi,
            pdi: cur.pdi,
            tau: cur.tau,
            open_prev: prev.open as f64,
            open: cur.open as f64,
        }
    }

    pub fn delta_nodes(&self) -> f64 {
        self.nodes - self.nodes_prev
    }
}

/// Terminal quantities shared by all signals: `(s, g_T, d_T)`.
fn terminal_terms(n_final: f64, rs: &RewardState, bs: &BaselineStats) -> (f64, f64, f64) {
    let b = bs.baseline_nodes as f64;
    let s = ratio_c(b, n_final, S_CAP);
    let g = tanh_s(1.0, bs.gap0 - rs.gap);
    let d = tanh_s(1.0, (bs.pdi0 - rs.pdi) / safe_den(bs.pdi0));
    (s, g, d)
}

pub fn h1_step(rs: &RewardState, bs: &BaselineStats) -> f64 {
    -tanh_s(
        1.0,
        rs.delta_nodes() / (0.02 * bs.baseline_nodes as f64 + 1.0),
    )
}

/// `None` covers any status outside the four solver outcomes.
pub fn h1_terminal(
    status: Option<RunStatus>,
    n_final: f64,
    rs: &RewardState,
    bs: &BaselineStats,
) -> f64 {
    let (s, g, d) = terminal_terms(n_final, rs, bs);
    match status {
        Some(RunStatus::Optimal) => 1.0 + 2.0 * s,
        Some(RunStatus::Infeasible | RunStatus::Unbounded) => 0.5 + 1.5 * s,
        Some(RunStatus::TimeLimit) => 0.2 * s + 0.6 * g + 0.2 * d,
        None => 0.2 * s,
    }
}

/// Log-scaled node efficiency.
pub fn efficiency(rs: &RewardState, bs: &BaselineStats) -> f64 {
    let b = bs.baseline_nodes as f64;
    tanh_s(
        H2_BETA,
        1.0 - (1.0 + rs.nodes).ln() / safe_den((1.0 + b).ln()),
    )
}

/// Pace relative to the baseline's node budget at this point in time.
pub fn pace(rs: &RewardState, bs: &BaselineStats) -> f64 {
    let target = bs.baseline_nodes as f64 * rs.tau.max(0.0).powf(H2_RHO);
    tanh_s(H2_BETA, (target - rs.nodes) / (target + 1.0))
}

/// Relative gap closure since the previous decision.
pub fn gap_closure(rs: &RewardState) -> f64 {
    if rs.t == 0 {
        0.0
    } else {
        tanh_s(1.0, (rs.gap_prev - rs.gap) / (rs.gap_prev.abs() + 1e-9))
    }
}

/// PDI growth relative to the baseline PDI (non-positive, since PDI only accumulates).
pub fn pdi_change(rs: &RewardState, bs: &BaselineStats) -> f64 {
    tanh_s(1.0, (rs.pdi_prev - rs.pdi) / safe_den(bs.pdi0))
}

/// Frontier shrinkage.
pub fn progress(rs: &RewardState) -> f64 {
    ((rs.open_prev - rs.open) / (rs.open_prev + 1.0)).tanh()
}

pub fn h2_step(rs: &RewardState, bs: &BaselineStats) -> f64 {
    let r = 0.5 * efficiency(rs, bs)
        + 0.2 * pace(rs, bs)
        + 0.2 * gap_closure(rs)
        + 0.1 * pdi_change(rs, bs);
    r.clamp(-1.0, 1.0)
}

pub fn h2_terminal(
    status: Option<RunStatus>,
    n_final: f64,
    rs: &RewardState,
    bs: &BaselineStats,
) -> f64 {
    let (s, g, d) = terminal_terms(n_final, rs, bs);
    match status {
        Some(RunStatus::Optimal) => 1.0 + 2.5 * s,
        Some(RunStatus::Infeasible | RunStatus::Unbounded) => 0.7 + 2.0 * s,
        Some(RunStatus::TimeLimit) => 0.4 * s + 0.4 * g + 0.2 * d,
        None => 0.3 * s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H3Weights {
    pub difficulty: f64,
    pub nodes: f64,
    pub gap: f64,
    pub pdi: f64,
    pub pace: f64,
    pub prog: f64,
}

pub fn h3_weights(baseline_nodes: u64) -> H3Weights {
    let b = baseline_nodes.max(1) as f64;
    let x = ((1.0 + b).ln() - 2f64.ln()) / ((1.0 + 1e6f64).ln() - 2f64.ln());
    let d = 1.0 / (1.0 + (-x).exp());
    let nodes = 0.55 * (1.0 - d) + 0.25 * d;
    let gap = 0.10 * (1.0 - d) + 0.30 * d;
    let pdi = 0.05 * (1.0 - d) + 0.20 * d;
    // Pace takes the remainder of 0.85 (equal to 0.15(1-d) + 0.10d up to
    // rounding). The subtraction is exact since the partial sum is in [0.7, 0.75].
    let pace = 0.85 - (nodes + gap + pdi);
    H3Weights {
        difficulty: d,
        nodes,
        gap,
        pdi,
        pace,
        prog: 0.15,
    }
}

pub fn h3_step(rs: &RewardState, bs: &BaselineStats, w: &H3Weights) -> f64 {
    let gap_pen = tanh_s(0.5, rs.gap / (rs.gap_start + 1e-9));
    let r = w.nodes * efficiency(rs, bs) + w.pace * pace(rs, bs) - w.gap * gap_pen
        + w.pdi * pdi_change(rs, bs)
        + w.prog * progress(rs);
    r.clamp(-1.0, 1.0)
}

pub fn h3_terminal(
    status: Option<RunStatus>,
    n_final: f64,
    rs: &RewardState,
    bs: &BaselineStats,
) -> f64 {
    let (s, g, d) = terminal_terms(n_final, rs, bs);
    match status {
        Some(RunStatus::Optimal) => 1.0 + 3.0 * s,
        Some(RunStatus::Infeasible | RunStatus::Unbounded) => 0.8 + 2.0 * s,
        Some(RunStatus::TimeLimit) => 0.5 * s + 0.3 * g + 0.2 * d,
        None => 0.3 * s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardSignal {
    H1,
    H2,
    H3,
}

impl RewardSignal {
    pub const ALL: [RewardSignal; 3] = [RewardSignal::H1, RewardSignal::H2, RewardSignal::H3];

    pub fn step(self, rs: &RewardState, bs: &BaselineStats) -> f64 {
        match self {
            RewardSignal::H1 => h1_step(rs, bs),
            RewardSignal::H2 => h2_step(rs, bs),
            RewardSignal::H3 => h3_step(rs, bs, &h3_weights(bs.baseline_nodes)),
        }
    }

    pub fn terminal(
        self,
        status: Option<RunStatus>,
        n_final: f64,
        rs: &RewardState,
        bs: &BaselineStats,
    ) -> f64 {
        match self {
            RewardSignal::H1 => h1_terminal(status, n_final, rs, bs),
            RewardSignal::H2 => h2_terminal(status, n_final, rs, bs),
            RewardSignal::H3 => h3_terminal(status, n_final, rs, bs),
        }
    }
}

impl fmt::Display for RewardSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardSignal::H1 => "H1",
            RewardSignal::H2 => "H2",
            RewardSignal::H3 => "H3",
        })
    }
}

impl FromStr for RewardSignal {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "H1" => Ok(RewardSignal::H1),
            "H2" => Ok(RewardSignal::H2),
            "H3" => Ok(RewardSignal::H3),
            _ => Err(format!("unknown reward signal `{s}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(b: u64) -> BaselineStats {
        BaselineStats {
            instance: "x".into(),
            seed: 0,
            baseline_nodes: b,
            gap0: 0.5,
            pdi0: 2.0,
            status: RunStatus::Optimal,
        }
    }

    fn rs() -> RewardState {
        RewardState {
            t: 1,
            nodes_prev: 3.0,
            nodes: 5.0,
            gap_prev: 0.5,
            gap: 0.5,
            gap_start: 0.5,
            pdi_prev: 1.0,
            pdi: 1.0,
            tau: 0.0,
            open_prev: 2.0,
            open: 2.0,
        }
    }

    #[test]
    fn h1_examples() {
        let mut r = rs();
        r.nodes = r.nodes_prev;
        assert_eq!(h1_step(&r, &bs(50)), 0.0);
        assert!((h1_step(&rs(), &bs(50)) + 1f64.tanh()).abs() < 1e-15);
        r.nodes = 1e9;
        assert!(h1_step(&r, &bs(50)) > -1.0 - 1e-15 && h1_step(&r, &bs(50)) < -0.999);
        assert!((h1_terminal(Some(RunStatus::Optimal), 50.0, &rs(), &bs(50)) - 3.0).abs() < 1e-15);
        assert!((h1_terminal(Some(RunStatus::Optimal), 5.0, &rs(), &bs(50)) - 7.0).abs() < 1e-15);
        let mut t = rs();
        t.pdi = 2.0;
        assert!((h1_terminal(Some(RunStatus::TimeLimit), 100.0, &t, &bs(50)) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn h2_components() {
        let mut r = rs();
        r.nodes = 50.0;
        assert_eq!(efficiency(&r, &bs(50)), 0.0);
        r.nodes = 0.0;
        r.tau = 0.0;
        assert_eq!(pace(&r, &bs(50)), 0.0);
        r.t = 0;
        r.gap = 0.1;
        assert_eq!(gap_closure(&r), 0.0);
    }

    #[test]
    fn h3_weights_at_unit_baseline() {
        let w = h3_weights(1);
        assert_eq!(w.difficulty, 0.5);
        assert!((w.nodes - 0.40).abs() < 1e-15);
        assert!((w.gap - 0.20).abs() < 1e-15);
        assert!((w.pdi - 0.125).abs() < 1e-15);
        assert!((w.pace - 0.125).abs() < 1e-15);
        assert_eq!(w.prog, 0.15);
    }

    #[test]
    fn h3_closed_gap_leaves_pace_only() {
        let b = bs(40);
        let mut r = rs();
        r.gap = 0.0;
        r.nodes = 40.0;
        r.tau = 0.6;
        let w = h3_weights(40);
        let expected = w.pace * pace(&r, &b);
        assert!((h3_step(&r, &b, &w) - expected).abs() < 1e-15);
        assert!((h3_terminal(Some(RunStatus::Optimal), 40.0, &r, &b) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn zero_denominators_stay_finite() {
        let mut b = bs(1);
        b.pdi0 = 0.0;
        b.gap0 = 0.0;
        let mut r = rs();
        r.gap_start = 0.0;
        r.pdi = 3.0;
        for sig in RewardSignal::ALL {
            assert!(sig.step(&r, &b).is_finite());
            assert!(sig
                .terminal(Some(RunStatus::TimeLimit), 1.0, &r, &b)
                .is_finite());
        }
    }
}
