//! Error type shared by every metric in this crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("input length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("class imbalance after split: {0}")]
    Imbalance(String),
    #[error("non-finite statistic: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Core(#[from] comets_core::CoreError),
    #[error(transparent)]
    Nn(#[from] comets_nn::NnError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;
