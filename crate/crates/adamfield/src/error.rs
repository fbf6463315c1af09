//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdamFieldError {
    /// A damping-parameter or schedule invariant was violated at construction.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A caller-supplied precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Vector lengths do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A numeric routine failed (divergence, too many discarded samples, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Root finding could not bracket or resolve a zero.
    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AdamFieldError>;
