//! Factorized gradient descent for noisy symmetric matrix sensing with an
//! over-specified factor rank, plus the measurement and Monte Carlo tooling
//! used to study its convergence.

pub mod error;
pub mod gradient;
pub mod linalg;
pub mod problem;
pub mod concentration;
pub mod rng;
pub mod stats;
pub mod subspace;
pub mod harness;

pub use error::{Error, Result};
