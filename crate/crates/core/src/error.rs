use thiserror::Error;

/// Errors raised by the homomorphic contract and everything layered on it.
#[derive(Debug, Error)]
pub enum HeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("level exhausted: operation needs {needed} level(s), operand has {available}")]
    LevelExhausted { needed: usize, available: usize },

    #[error("missing rotation key for step {0}")]
    MissingRotationKey(i64),

    #[error("incompatible operands: {0}")]
    IncompatibleOperands(String),

    #[error("expected {expected} slots, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension violation: {0}")]
    Dimension(String),

    #[error("format mismatch: {0}")]
    Format(String),

    #[error("architecture does not fit: {0}")]
    Capacity(String),

    #[error("encoding overflow: {0}")]
    Overflow(String),

    #[error("snapshot inspection is disabled in this configuration")]
    SnapshotDisabled,

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HeError>;
