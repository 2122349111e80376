//! Risk-aware loss-reserve adjustment with reinforcement learning.

pub mod agent;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod manifest;
mod parallel;
pub mod regimes;
pub mod risk;
pub mod triangles;

pub use error::{Error, Result};
