//! Tabular MDP planning and reinforcement learning built on Blackwell
//! approachability.
//!
//! The crate couples classical dynamic-programming oracles with no-regret
//! machinery:
//!
//! - [`mdp`] — finite MDP models, exact policy evaluation, value iteration,
//!   and the synchronous expected-SARSA backup.
//! - [`approachability`] — regret vectors, regret matching, distance to the
//!   nonpositive orthant, and Blackwell-game rollouts.
//! - [`planner`] — Blackwell value iteration: per-state regret matchers fed
//!   by synchronous expected-SARSA sweeps; the averaged Q tables converge
//!   to Q*.
//! - [`learner`] — Blackwell Q-learning (two-timescale asynchronous updates
//!   with regret-matched action selection) and ε-greedy TD baselines.
//! - [`envs`] — cliff walking, random MDPs, and simulators.
//! - [`harness`] — experiment configuration, multi-run orchestration with
//!   deterministic seeding, CSV/summary persistence, and plot data.

pub mod approachability;
pub mod envs;
pub mod error;
pub mod harness;
pub mod learner;
pub mod mdp;
pub mod planner;

pub use error::{Error, Result};
