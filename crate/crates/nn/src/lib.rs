//! Differentiable building blocks for the COMETS generators.
//!
//! A small tape-based reverse-mode autodiff engine with exactly the layer
//! vocabulary the models need: dense and causal dilated convolutions
//! (optionally spectrally normalized), pointwise nonlinearities, dropout,
//! per-sample reductions and a differentiable pairwise-correlation feature.
//! Parameters live in named sets, train with Adam, and persist in a
//! self-describing binary checkpoint container.
//!
//! Graphs are generic over the element type: production code runs `f32`
//! (with `f64` accumulation in reductions, losses and optimizer moments);
//! tests instantiate the identical graph in `f64` for finite-difference
//! verification.

pub mod adam;
pub mod checkpoint;
pub mod embedding;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod params;
pub mod scalar;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    pack_adam, pack_param_set, unpack_adam, unpack_param_set, Checkpoint, TensorData,
};
pub use embedding::{minute_to_bin, sinusoidal_embedding, sinusoidal_rows};
pub use error::{NnError, Result};
pub use graph::{Graph, Mode, Var};
pub use layers::{Activation, Layer, LayerSpec};
pub use params::{GradientMap, Param, ParamSet};
pub use scalar::Scalar;
