//! Best-of-both-worlds online learning in known-transition layered episodic MDPs.
//!
//! Two learners are provided: [`global_opt`] runs optimistic FTRL with a
//! log-barrier regularizer directly over occupancy measures, and
//! [`policy_opt`] runs a per-state optimistic FTRL with dilated exploration
//! bonuses and virtual episodes. Both adapt their per-pair learning rates to
//! the observed data and take loss predictions from either a gradient-descent
//! or an empirical-mean predictor.
//!
//! Around the learners sit loss generators for adversarial, stochastic and
//! corrupted regimes ([`env`]), exact complexity measures ([`complexity`]) and
//! an experiment harness that records exact expected regret ([`harness`]).

pub mod error;
pub mod mdp;
pub mod baseline;
pub mod complexity;
pub mod env;
pub mod global_opt;
pub mod harness;
pub mod learner;
pub mod policy_opt;
pub mod predictor;
pub mod solver;

pub use error::{Error, Result};
