//! Tabular offline goal-conditioned RL on gridworld mazes.
//!
//! The crate provides a deterministic maze MDP, offline dataset generation
//! with the goal/subgoal sampling distributions used by implicit value
//! learning and advantage-weighted policy extraction, a family of tabular
//! policy extraction objectives (GCBC, AWR, HIQL, GCWAE, offline RIS, SAW)
//! with analytic gradients, brute-force oracles for every closed form the
//! objectives rely on, and a rollout evaluation harness.

pub mod config;
pub mod dataset;
pub mod env;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod oracle;
pub mod policy;
pub mod value;

pub use error::{Error, Result};
