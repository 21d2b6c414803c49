//! Learning to branch in mixed-integer linear programming.
//!
//! The crate contains a small branch-and-bound solver with pluggable branching
//! policies ([`bnb`]), the dense simplex it runs on ([`lp`]), a featurizer
//! that turns solver state into fixed-width tensors ([`features`]), a
//! tree-gated transformer actor-critic ([`net`]) trained with PPO ([`ppo`])
//! under instance-normalized rewards ([`rewards`]), and the evaluation and
//! tuning harness ([`eval`]).

pub mod bnb;
pub mod cli;
pub mod config;
pub mod eval;
pub mod features;
pub mod lp;
pub mod milp;
pub mod net;
pub mod pipeline;
pub mod ppo;
pub mod rewards;
