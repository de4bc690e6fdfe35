//! Error type of the generation crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenerationError {
    /// A configuration value violates an invariant.
    #[error("invalid generation config: {0}")]
    Config(String),
    /// Input data does not match the model or experiment.
    #[error("invalid generation input: {0}")]
    Input(String),
    /// The rollout produced a non-finite value; `step` is the 0-based index
    /// of the offending generated row.
    #[error("rollout diverged at generated step {step}: {message}")]
    Rollout { step: usize, message: String },
    #[error(transparent)]
    Core(#[from] comets_core::CoreError),
    #[error(transparent)]
    Gan(#[from] comets_gan::GanError),
    #[error(transparent)]
    Diffusion(#[from] comets_diffusion::DiffusionError),
    #[error(transparent)]
    Eval(#[from] comets_eval::EvalError),
    #[error("report serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GenerationError>;
