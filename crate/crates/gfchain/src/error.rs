//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by grid construction, model evaluation, kernel assembly,
/// measure operations, sampling, and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar or structural parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The fragmentation-to-growth ratio could not be evaluated at a point.
    #[error("model evaluation failed at x = {x}: {reason}")]
    Eval { x: f64, reason: String },

    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A vector length does not match the expected dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Two objects were built over incompatible grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// An iteration did not reach its tolerance within the allowed steps.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// A diagnostic needs growth bounds the model does not declare.
    #[error("model `{0}` declares no growth bounds")]
    MissingGrowthParams(String),

    /// The ratio is not integrable at the origin, so the exponential
    /// weight function is undefined.
    #[error("model `{0}`: ratio not integrable at the origin; weight function undefined")]
    SingularModel(String),

    /// Data failed a semantic validation check.
    #[error("validation failed: {0}")]
    Validation(String),

    /// An I/O operation failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
