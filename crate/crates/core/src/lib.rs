//! Continual offline goal-conditioned imitation learning with growing
//! subspaces of hierarchical policies.

pub mod baselines;
pub mod envs;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod gcrl;
pub mod metrics;
pub mod nnet;
pub mod rng;
pub mod subspace;

pub use error::{Error, Result};
