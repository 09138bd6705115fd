//! Reward-shaped locomotion workbench.
//!
//! A deterministic 2D biped runner, a from-scratch DDPG agent, and
//! potential-based reward shaping driven by demonstration keypoint
//! tracks, plus a tabular rig that verifies the shaping guarantees
//! against exact dynamic-programming oracles.

pub mod agent;
pub mod demo;
pub mod error;
pub mod featurize;
pub mod harness;
pub mod neural;
pub mod shaping;
pub mod sim;
pub mod tabular;

pub use error::{Error, Result};
