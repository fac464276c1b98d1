//! Crate-wide error type and the exit-code mapping used by the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed caller input: non-finite values, shape mismatches, empty grids.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Argument outside the mathematical domain of the operation.
    #[error("out of domain: {0}")]
    OutOfDomain(String),

    /// Parameters violate a validity inequality of the rate analysis.
    #[error("out of validity region: {0}")]
    OutOfValidity(String),

    /// The requested decay rate does not exist (e.g. a <= b in the delay
    /// comparison equation, or lambda1 <= lambda2).
    #[error("no positive rate: {0}")]
    NoPositiveRate(String),

    /// The integrator produced a non-finite state.
    #[error("divergence at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    /// An iterative solver stopped before reaching its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// The density grid underflowed; the box does not cover the support.
    #[error("box too small: {0}")]
    BoxTooSmall(String),

    /// Step size incompatible with the delay window.
    #[error("step too large: {0}")]
    StepTooLarge(String),

    /// Configuration file could not be parsed or contains unknown keys.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Contract breach that indicates a bug in the caller, e.g. a history
    /// buffer that does not cover the delay window.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// CLI exit code: 1 usage, 2 validity violation, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Config(_) | Error::Io(_) => 1,
            Error::OutOfValidity(_) | Error::OutOfDomain(_) => 2,
            Error::NoPositiveRate(_)
            | Error::Divergence { .. }
            | Error::NoConvergence { .. }
            | Error::BoxTooSmall(_)
            | Error::StepTooLarge(_)
            | Error::Internal(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
