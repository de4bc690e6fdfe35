//! Denoising diffusion for multivariate market windows.
//!
//! A DDPM-style trainer and ancestral sampler for `F x C` windows, with an
//! optional coupling to the adversarial critic from `comets-gan`: the
//! critic's input gradient is added to the predicted noise at every reverse
//! step, steering samples toward (positive weight) or away from (negative
//! weight) what the critic scores as realistic.
//!
//! The pieces:
//!
//! - [`NoiseSchedule`] — the beta sequence with precomputed alpha-bar
//!   products.
//! - [`forward_sample`] — the closed-form noising step used for training.
//! - [`DiffusionModel`] / [`train_diffusion`] — a dilated temporal
//!   convolution noise predictor and its denoising score-matching loop.
//! - [`sample_unguided`] / [`sample_guided`] — ancestral sampling, without
//!   or with the critic in the loop.
//!
//! Everything is deterministic given a seed; independent windows draw from
//! per-window rng substreams so they can be regenerated in isolation.

pub mod eps_net;
pub mod error;
pub mod forward;
pub mod model;
pub mod sample;
pub mod schedule;
pub mod train;

pub use eps_net::eps_forward;
pub use error::{DiffusionError, Result};
pub use forward::forward_sample;
pub use model::{adam_config, init_eps_net, DiffusionModel, DiffusionTrainConfig, EpsNetConfig};
pub use sample::{
    critic_gradient, critic_score, guided_noise, predict_noise, sample_guided, sample_unguided,
    CriticInputMode, GuidanceConfig,
};
pub use schedule::{
    NoiseSchedule, DEFAULT_BETA_MAX, DEFAULT_BETA_MIN, DEFAULT_T_STEPS,
};
pub use train::{train_diffusion, DiffusionLogEntry};
