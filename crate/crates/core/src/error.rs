use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("power iteration did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("variance update collapsed to {value:.3e} at iteration {iter}")]
    DegenerateVariance { iter: usize, value: f64 },

    #[error("tanh denominator 1 + |θ*|² - |θ|² = {value:.4} is below the 0.05 guard")]
    DenominatorTooSmall { value: f64 },

    #[error("norm {norm} is outside the validated quadrature range [0, 25]")]
    Range { norm: f64 },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("log-log fit needs positive errors, got {value} at n = {n}")]
    NonPositiveError { n: f64, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    /// Failures of the numerical routines themselves, as opposed to bad input or IO.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NoConvergence { .. }
                | Error::DegenerateVariance { .. }
                | Error::DenominatorTooSmall { .. }
                | Error::Range { .. }
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
