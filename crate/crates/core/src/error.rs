use thiserror::Error;

/// Errors raised by the simulation engines and estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested quantity has no implementation for this model kind.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The integrator produced a non-finite phase point.
    #[error("integration blow-up at step {step} (t = {time}): non-finite state")]
    BlowUp { step: usize, time: f64 },

    #[error("matrix is not Hermitian: max |A - A^H| = {defect:e} exceeds {tol:e}")]
    NotHermitian { defect: f64, tol: f64 },

    /// A test-function or observable grid does not match the protocol grid.
    #[error("grid mismatch: expected {expected} samples, got {got}")]
    GridMismatch { expected: usize, got: usize },

    /// Too few histogram bins are populated on both sides for a Crooks fit.
    #[error(
        "insufficient overlap between forward and backward work histograms: \
         {admissible} admissible bins, need at least {required}"
    )]
    InsufficientOverlap { admissible: usize, required: usize },

    /// Forward and backward work supports could not be paired.
    #[error("work-value alignment failed; unmatched values: {unmatched:?}")]
    Alignment { unmatched: Vec<f64> },

    /// A probability distribution violates its normalization invariant.
    #[error("normalization defect {defect:e} exceeds {tol:e}")]
    Normalization { defect: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
