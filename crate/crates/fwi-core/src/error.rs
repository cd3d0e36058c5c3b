//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FwiError>;

#[derive(Debug, Error)]
pub enum FwiError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Requested time step violates the explicit-scheme stability bound.
    #[error("CFL violation: dt = {dt} exceeds admissible dt = {admissible}")]
    CflViolation { dt: f64, admissible: f64 },

    /// A non-finite value appeared in the wavefield mid-run.
    #[error("solver instability: non-finite field value at step {step}")]
    Instability { step: usize },

    #[error("degenerate range: field is constant, rescale is undefined")]
    DegenerateRange,

    #[error("corrupt dataset: {0}")]
    CorruptDataset(String),

    #[error("unsupported version: {0}")]
    UnsupportedVersion(String),

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    /// The inverse operator has no input-VJP capability.
    #[error("inverse operator does not provide an input VJP")]
    MissingVjp,

    #[error("training aborted: non-finite loss at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl FwiError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        FwiError::InvalidArgument(msg.into())
    }
}
