use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A matrix that had to be inverted was singular or numerically so.
    #[error("numerical failure: {what} (condition estimate {condition:e})")]
    Numerical { what: String, condition: f64 },

    /// An iteration ran out of budget without settling.
    #[error("no convergence after {iterations} iterations: {detail}")]
    Convergence { iterations: usize, detail: String },

    /// Observation has zero probability under the current belief.
    #[error("zero-probability evidence at step {step}")]
    Evidence { step: usize },

    /// Brute-force enumeration would exceed the documented size bound.
    #[error("instance too large for enumeration: {needed} > {limit}")]
    Capacity { needed: u128, limit: u128 },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    /// Malformed model description; `line` is 1-based.
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
