//! Numerical laboratory for delay kinetic particle systems.
//!
//! The crate integrates the N-particle stochastic system with a
//! time-averaged delay interaction, measures contraction between
//! synchronously coupled ensembles in perturbed Wasserstein metrics, and
//! evaluates every closed-form object of the associated decay analysis:
//! Lambert-W delay rates, the rate pair of the contraction estimate,
//! confluent hypergeometric asymptotics for the infinite-delay regime, and
//! the stationary density as a fixed point.

pub mod cli;
pub mod config;
pub mod error;
pub mod kummer;
pub mod metrics;
pub mod model;
pub mod rates;
pub mod rng;
pub mod simulator;
pub mod stationary;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};

/// Artifact version stamped into CSV metadata lines.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
