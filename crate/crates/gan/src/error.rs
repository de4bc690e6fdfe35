//! Error type for configuration, forward passes and training.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("training aborted at step {step}: {message}")]
    Training { step: usize, message: String },
    #[error(transparent)]
    Core(#[from] comets_core::CoreError),
    #[error(transparent)]
    Nn(#[from] comets_nn::NnError),
    #[error(transparent)]
    Eval(#[from] comets_eval::EvalError),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GanError>;
