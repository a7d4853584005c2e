//! Double DQN on classic-control tasks with greedy and epsilon-greedy
//! behaviour policies, plus the phase-space diagnostics used to study how a
//! purely greedy agent still explores.

pub mod agent;
pub mod analysis;
pub mod cli;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod nn;
pub mod oracle;
pub mod replay;
pub mod rng;

pub use error::{Error, Result};
