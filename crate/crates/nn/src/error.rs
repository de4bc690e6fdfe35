//! Error type for graph construction, training and persistence.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    /// Tensor dimensions do not line up for the requested operation.
    #[error("shape mismatch in {op}: expected {expected}, found {actual}")]
    Shape {
        op: String,
        expected: String,
        actual: String,
    },
    /// A named parameter is missing or already defined.
    #[error("parameter error: {0}")]
    Param(String),
    /// Invalid layer or model hyper-parameters.
    #[error("invalid layer spec: {0}")]
    Spec(String),
    /// Backward pass misuse or numerical failure.
    #[error("backward error: {0}")]
    Backward(String),
    /// A gradient or update became non-finite.
    #[error("non-finite value in {0}")]
    NonFinite(String),
    /// Checkpoint serialization problems.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
