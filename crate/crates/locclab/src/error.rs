use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite or out-of-domain value: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("malformed protocol: {0}")]
    Structural(String),

    #[error("unsupported Schmidt rank {0} (expected 2)")]
    UnsupportedRank(usize),

    #[error("gate is local (theta = 0); nothing to implement")]
    DegenerateGate,

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("case mismatch: expected {expected}, found {found}")]
    CaseMismatch { expected: String, found: String },

    #[error("reduction step {step} failed: {reason}")]
    Reduction { step: usize, reason: String },

    #[error("protocol does not implement the target gate: {0}")]
    NotVerified(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
