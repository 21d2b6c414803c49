//! Classical branching rules used as baselines.

use super::pseudocost::{RELIABILITY, SCORE_EPS};
use super::{BnbError, BranchingPolicy, DecisionContext};
use crate::features::StateFeatures;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Random,
    MostFractional,
    Pscost,
    Strong,
    RelpscostLike,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Random,
        PolicyKind::MostFractional,
        PolicyKind::Pscost,
        PolicyKind::Strong,
        PolicyKind::RelpscostLike,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Random => "RANDOM",
            PolicyKind::MostFractional => "MOST_FRACTIONAL",
            PolicyKind::Pscost => "PSCOST",
            PolicyKind::Strong => "STRONG",
            PolicyKind::RelpscostLike => "RELPSCOST_LIKE",
        }
    }

    pub fn build(self, seed: u64) -> BaselinePolicy {
        BaselinePolicy::new(self, seed)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.to_ascii_uppercase().replace('-', "_");
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .or(match norm.as_str() {
                "RELPSCOST" => Some(PolicyKind::RelpscostLike),
                "MOSTFRAC" => Some(PolicyKind::MostFractional),
                _ => None,
            })
            .ok_or_else(|| format!("unknown policy `{s}`"))
    }
}

/// All baseline rules, freshly seeded.
pub fn baseline_policies(seed: u64) -> Vec<BaselinePolicy> {
    PolicyKind::ALL.into_iter().map(|k| k.build(seed)).collect()
}

#[derive(Debug, Clone)]
pub struct BaselinePolicy {
    kind: PolicyKind,
    rng: ChaCha8Rng,
}

impl BaselinePolicy {
    pub fn new(kind: PolicyKind, seed: u64) -> Self {
        Self {
            kind,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }
}

/// Index of the highest score; ties go to the lowest variable index.
fn argmax_by_var(scores: &[f64], ctx: &DecisionContext<'_>) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        let better = scores[i] > scores[best]
            || (scores[i] == scores[best] && ctx.candidates[i].var < ctx.candidates[best].var);
        if better {
            best = i;
        }
    }
    best
}

fn strong_score(ctx: &mut DecisionContext<'_>, i: usize) -> Result<f64, BnbError> {
    let (down, up) = ctx.strong_branch(i)?;
    let parent = ctx.node_bound;
    Ok(down.gain(parent).max(SCORE_EPS) * up.gain(parent).max(SCORE_EPS))
}

impl BranchingPolicy for BaselinePolicy {
    fn name(&self) -> String {
        self.kind.as_str().to_string()
    }

    fn decide(
        &mut self,
        _state: &StateFeatures,
        ctx: &mut DecisionContext<'_>,
    ) -> Result<usize, BnbError> {
        let n = ctx.candidates.len();
        let scores: Vec<f64> = match self.kind {
            PolicyKind::Random => return Ok(self.rng.gen_range(0..n)),
            PolicyKind::MostFractional => ctx
                .candidates
                .iter()
                .map(|c| c.frac.min(1.0 - c.frac))
                .collect(),
            PolicyKind::Pscost => ctx
                .candidates
                .iter()
                .map(|c| ctx.pseudocosts.product_score(c.var, c.frac))
                .collect(),
            PolicyKind::Strong => (0..n)
                .map(|i| strong_score(ctx, i))
                .collect::<Result<_, _>>()?,
            PolicyKind::RelpscostLike => (0..n)
                .map(|i| {
                    let c = ctx.candidates[i];
                    if ctx.pseudocosts.is_reliable(c.var, RELIABILITY) {
                        Ok(ctx.pseudocosts.product_score(c.var, c.frac))
                    } else {
                        strong_score(ctx, i)
                    }
                })
                .collect::<Result<_, _>>()?,
        };
        Ok(argmax_by_var(&scores, ctx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnb::{run, RunConfig, RunStatus};
    use crate::milp::{validate_instance, MilpInstance, RowSense};

    fn knapsack() -> crate::milp::ValidInstance {
        let mut inst = MilpInstance::new("knap2", 2);
        inst.objective = vec![-3.0, -4.0];
        inst.upper_bounds = vec![1.0, 1.0];
        inst.is_integer = vec![true, true];
        inst.add_row(&[(0, 2.0), (1, 3.0)], RowSense::Le, 4.0);
        validate_instance(&inst).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.as_str().parse::<PolicyKind>().unwrap(), k);
        }
        assert_eq!(
            "relpscost".parse::<PolicyKind>().unwrap(),
            PolicyKind::RelpscostLike
        );
    }

    #[test]
    fn every_baseline_solves_knapsack() {
        for mut p in baseline_policies(3) {
            let stats = run(&knapsack(), &mut p, &RunConfig::default()).unwrap();
            assert_eq!(stats.status, RunStatus::Optimal, "{}", p.name());
            assert!((stats.primal_bound + 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn strong_counts_child_lps() {
        let mut p = PolicyKind::Strong.build(0);
        let cfg = RunConfig {
            cutoff: Some(-4.0),
            ..Default::default()
        };
        let stats = run(&knapsack(), &mut p, &cfg).unwrap();
        assert_eq!(stats.strong_branch_lps, 2 * stats.decisions);
        assert_eq!(stats.events[0].var, 1);
    }
}
