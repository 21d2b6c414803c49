use super::Transition;
use crate::bnb::{
    run, BnbError, BranchingPolicy, DecisionContext, RunConfig, RunStats, StopReason,
};
use crate::features::StateFeatures;
use crate::milp::ValidInstance;
use crate::net::{forward, log_prob_entropy, Mode, PolicyParameters};
use crate::rewards::{BaselineStats, RewardSignal, RewardState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What the policy saw and did at one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRecord {
    pub state: StateFeatures,
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
}

/// The learned policy plugged into the solver. Sampling mode is used for
/// rollouts, greedy mode for evaluation.
pub struct NetPolicy<'p> {
    params: &'p PolicyParameters,
    rng: Option<ChaCha8Rng>,
    pub records: Vec<PolicyRecord>,
}

impl<'p> NetPolicy<'p> {
    pub fn sampling(params: &'p PolicyParameters, seed: u64) -> Self {
        Self {
            params,
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
            records: Vec::new(),
        }
    }

    pub fn greedy(params: &'p PolicyParameters) -> Self {
        Self {
            params,
            rng: None,
            records: Vec::new(),
        }
    }
}

/// Inverse-CDF draw; falls back to the last unmasked slot on rounding.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

impl BranchingPolicy for NetPolicy<'_> {
    fn name(&self) -> String {
        "TGPPO".into()
    }

    fn decide(
        &mut self,
        state: &StateFeatures,
        _ctx: &mut DecisionContext<'_>,
    ) -> Result<usize, BnbError> {
        let out = forward(self.params, state, Mode::Rollout)
            .map_err(|e| BnbError::Policy(e.to_string()))?;
        let action = match self.rng.as_mut() {
            Some(rng) => sample_index(&out.probs, rng.gen::<f64>()),
            None => out.argmax(),
        };
        let (log_prob, _) =
            log_prob_entropy(&out, action).map_err(|e| BnbError::Policy(e.to_string()))?;
        if self.rng.is_some() {
            self.records.push(PolicyRecord {
                state: state.clone(),
                action,
                log_prob,
                value: out.value,
            });
        }
        Ok(action)
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub stats: RunStats,
    pub transitions: Vec<Transition>,
    /// `V(s_{T+1})` for an episode cut at the horizon, else 0.
    pub bootstrap_value: f64,
    pub sum_reward: f64,
}

/// Turns a finished run and the policy's per-decision records into
/// transitions. The terminal reward is added to the last step.
pub fn episode_transitions(
    stats: &RunStats,
    records: Vec<PolicyRecord>,
    baseline: &BaselineStats,
    signal: RewardSignal,
) -> Vec<Transition> {
    debug_assert_eq!(records.len(), stats.events.len());
    let n = records.len();
    let Some(first) = stats.events.first() else {
        return Vec::new();
    };
    let gap_start = first.before.gap;
    let finished = stats.stop_reason != StopReason::Truncated;
    let mut out = Vec::with_capacity(n);
    for (t, rec) in records.into_iter().enumerate() {
        let prev = &stats.events[t].before;
        let cur = stats
            .events
            .get(t + 1)
            .map_or(&stats.final_observation, |e| &e.before);
        let rs = RewardState::from_observations(t, prev, cur, gap_start);
        let mut reward = signal.step(&rs, baseline);
        let last = t + 1 == n;
        if last && finished {
            reward += signal.terminal(
                Some(stats.status),
                stats.nodes_explored as f64,
                &rs,
                baseline,
            );
        }
        out.push(Transition {
            state: rec.state,
            action: rec.action,
            log_prob_old: rec.log_prob,
            value_old: rec.value,
            reward,
            terminal: last && finished,
        });
    }
    out
}

/// One sampled episode of at most `horizon` decisions.
pub fn run_episode(
    inst: &ValidInstance,
    params: &PolicyParameters,
    run_cfg: &RunConfig,
    baseline: &BaselineStats,
    signal: RewardSignal,
    horizon: usize,
    seed: u64,
) -> Result<EpisodeResult, BnbError> {
    let mut policy = NetPolicy::sampling(params, seed);
    let cfg = RunConfig {
        truncate_after: Some(horizon),
        keep_tree: false,
        ..run_cfg.clone()
    };
    let stats = run(inst, &mut policy, &cfg)?;
    let bootstrap_value = match &stats.pending_state {
        Some(s) => {
            forward(params, s, Mode::Rollout)
                .map_err(|e| BnbError::Policy(e.to_string()))?
                .value
        }
        None => 0.0,
    };
    let transitions = episode_transitions(
        &stats,
        std::mem::take(&mut policy.records),
        baseline,
        signal,
    );
    let sum_reward = transitions.iter().map(|t| t.reward).sum();
    Ok(EpisodeResult {
        stats,
        transitions,
        bootstrap_value,
        sum_reward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnb::RunStatus;
    use crate::milp::{validate_instance, MilpInstance, RowSense};
    use crate::net::NetConfig;

    fn knapsack() -> ValidInstance {
        let mut inst = MilpInstance::new("knap2", 2);
        inst.objective = vec![-3.0, -4.0];
        inst.upper_bounds = vec![1.0, 1.0];
        inst.is_integer = vec![true, true];
        inst.add_row(&[(0, 2.0), (1, 3.0)], RowSense::Le, 4.0);
        validate_instance(&inst).unwrap()
    }

    fn baseline() -> BaselineStats {
        BaselineStats {
            instance: "knap2".into(),
            seed: 0,
            baseline_nodes: 5,
            gap0: 0.3,
            pdi0: 1.0,
            status: RunStatus::Optimal,
        }
    }

    #[test]
    fn sample_index_respects_zero_mass() {
        assert_eq!(sample_index(&[0.0, 1.0, 0.0], 0.999_999), 1);
        assert_eq!(sample_index(&[0.5, 0.5], 0.25), 0);
        assert_eq!(sample_index(&[0.5, 0.5], 0.75), 1);
        assert_eq!(sample_index(&[0.5, 0.5, 0.0], 1.0), 1);
    }

    #[test]
    fn full_episode_ends_terminal() {
        let p = PolicyParameters::init(&NetConfig::with_gate_depth(8, 1, 2, 0.0, 2, 0)).unwrap();
        let cfg = RunConfig {
            cutoff: Some(-4.0),
            ..Default::default()
        };
        let ep = run_episode(&knapsack(), &p, &cfg, &baseline(), RewardSignal::H3, 100, 3).unwrap();
        assert_eq!(ep.transitions.len(), ep.stats.decisions);
        assert!(!ep.transitions.is_empty());
        assert!(ep.transitions.last().unwrap().terminal);
        assert!(ep.transitions.iter().rev().skip(1).all(|t| !t.terminal));
        assert_eq!(ep.bootstrap_value, 0.0);
        assert!(ep
            .transitions
            .iter()
            .all(|t| t.log_prob_old <= 0.0 && t.reward.is_finite()));
    }

    #[test]
    fn horizon_cut_bootstraps() {
        let p = PolicyParameters::init(&NetConfig::with_gate_depth(8, 1, 2, 0.0, 2, 0)).unwrap();
        let cfg = RunConfig {
            cutoff: Some(-4.0),
            ..Default::default()
        };
        let ep = run_episode(&knapsack(), &p, &cfg, &baseline(), RewardSignal::H3, 1, 3).unwrap();
        assert_eq!(ep.transitions.len(), 1);
        assert!(!ep.transitions[0].terminal);
        assert_eq!(ep.stats.stop_reason, StopReason::Truncated);
        assert!(ep.bootstrap_value.is_finite());
    }
}
