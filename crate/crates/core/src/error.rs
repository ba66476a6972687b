use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate range: {0}")]
    DegenerateRange(String),

    #[error("degenerate column {column}: {reason}")]
    DegenerateColumn { column: usize, reason: String },

    #[error("invalid model spec: {0}")]
    Spec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
