//! Element type abstraction for the computation graph.
//!
//! Production models run in `f32` with 64-bit accumulation; gradient
//! verification instantiates the same graph in `f64`, where central finite
//! differences at step 1e-4 are meaningful.

use std::fmt::{Debug, Display};

/// Floating-point element type usable in graph tensors.
pub trait Scalar:
    num_traits::Float
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    const DTYPE: &'static str;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}
