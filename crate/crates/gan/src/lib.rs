//! Conditional Wasserstein GAN over multivariate market windows.
//!
//! The generator maps a conditioning window of `P` steps plus
//! time-conditioned noise to the next `F` steps through a stack of dilated
//! causal convolutions with a factored output head. The critic scores the
//! full `P + F` window with a spectral-normalized convolution stack and adds
//! a correlation head over the future window, so that cross-channel
//! dependence is judged explicitly: `o = o1 + alpha * o2`. Training follows
//! the usual alternating Wasserstein scheme and tracks a held-out
//! pairwise-correlation error.
//!
//! The trained critic doubles as a differentiable plausibility score;
//! [`critic_future_gradient`] exposes the input gradient that guided
//! diffusion sampling follows.

pub mod config;
pub mod critic;
pub mod error;
pub mod generator;
pub mod loss;
pub mod model;
pub mod train;

pub use config::{
    minute_bin, minute_bins, CriticConfig, GanTrainConfig, GeneratorConfig, GENERATOR_BLOCKS,
    TIME_BINS,
};
pub use critic::{
    critic_forward, critic_future_gradient, pairwise_correlation_features, CriticScore,
};
pub use error::{GanError, Result};
pub use generator::{generate, generator_forward, sample_noise};
pub use loss::wgan_losses;
pub use model::{init_critic, init_generator, GanModel};
pub use train::{held_out_ccd, held_out_split, train_gan, TrainLogEntry};
