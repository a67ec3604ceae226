//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the numeric kernel, the layer math and the
/// progressive training pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible matrix or vector dimensions.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// A numeric operation produced or received a non-finite value.
    #[error("non-finite value in {op}: {detail}")]
    Numeric { op: &'static str, detail: String },

    /// The iterative eigensolver exhausted its sweep budget.
    #[error("eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    /// A training run produced a NaN/Inf loss. Carries the epoch at which
    /// divergence was detected; sweep callers record the candidate as failed.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    /// The progressive construction could not continue.
    #[error("progression failed at step {step}: {detail}")]
    Progression { step: usize, detail: String },

    /// An API was used out of contract (stale cache, incomplete state).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed input data.
    #[error("parse error in {path}{location}: {detail}")]
    Parse {
        path: String,
        /// Preformatted " at row R" / " at row R, column C" suffix, possibly empty.
        location: String,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn numeric(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Numeric {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(detail: impl Into<String>) -> Self {
        Error::Invalid(detail.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
