//! Error type of the diffusion crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffusionError {
    /// A configuration value violates an invariant.
    #[error("invalid diffusion config: {0}")]
    Config(String),
    /// Input data does not match the model.
    #[error("invalid diffusion input: {0}")]
    Input(String),
    /// Training aborted; `step` is the 1-based step at which it happened.
    #[error("diffusion training aborted at step {step}: {message}")]
    Training { step: usize, message: String },
    /// Ancestral sampling diverged; `step` is the reverse step `t`.
    #[error("diffusion sampling failed at reverse step {step}: {message}")]
    Sampling { step: usize, message: String },
    #[error(transparent)]
    Core(#[from] comets_core::CoreError),
    #[error(transparent)]
    Nn(#[from] comets_nn::NnError),
    #[error(transparent)]
    Gan(#[from] comets_gan::GanError),
    #[error("checkpoint metadata: {0}")]
    Serde(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DiffusionError>;
