//! Experiment orchestration on top of the trained generators.
//!
//! Three experiment families:
//!
//! - [`rollout`] — extend a real starting window into an arbitrarily long
//!   synthetic series by feeding the generator its own output.
//! - [`apply_perturbation`] / [`rollout_perturbed`] /
//!   [`reactivity_experiment`] — inject volatility-scaled shocks into a
//!   rollout and measure, against a noise-matched unperturbed twin, how the
//!   model propagates them to the other channels.
//! - [`guidance_sweep`] — sample diffusion windows under several critic
//!   guidance weights (counterfactual, neutral, reinforced) and score each
//!   population with the critic.

pub mod error;
pub mod perturb;
pub mod reactivity;
pub mod rollout;
pub mod scenario;

pub use error::{GenerationError, Result};
pub use perturb::{apply_perturbation, PerturbationSpec};
pub use reactivity::{reactivity_experiment, CurveKind, ReactivityEntry, ReactivityReport};
pub use rollout::{
    rollout, rollout_perturbed, RolloutConfig, RolloutResult, MINUTES_PER_DAY,
};
pub use scenario::{guidance_sweep, GuidanceSweepEntry};
