//! Declarative layer specifications, parameter initialization and
//! application onto a computation graph.

use ndarray::Array2;
use rand::Rng;

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::params::ParamSet;
use crate::scalar::Scalar;

/// Pointwise nonlinearity used inside blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Silu,
    Tanh,
}

impl Activation {
    pub fn apply<S: Scalar>(self, g: &mut Graph<S>, x: Var) -> Var {
        match self {
            Activation::LeakyRelu { slope } => g.leaky_relu(x, slope),
            Activation::Silu => g.silu(x),
            Activation::Tanh => g.tanh(x),
        }
    }
}

/// Supported layer kinds and their settings.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    },
    Conv1d {
        c_in: usize,
        c_out: usize,
        kernel: usize,
        dilation: usize,
        stride: usize,
        bias: bool,
    },
    /// Causal convolution followed by an activation and dropout; output
    /// length equals input length.
    TemporalBlock {
        c_in: usize,
        c_out: usize,
        kernel: usize,
        dilation: usize,
        activation: Activation,
        dropout: f64,
    },
    LeakyRelu {
        slope: f64,
    },
    Silu,
    Tanh,
    Dropout {
        p: f64,
    },
    /// Wrap the weight of a Dense or Conv1d layer in spectral
    /// normalization with the given number of power iterations per forward.
    SpectralNorm {
        inner: Box<LayerSpec>,
        power_iters: usize,
    },
    /// Fixed sin/cos encoding of integer bins; input is a `(rows, 1)`
    /// column of bin indices, output `(rows, dim)`. Not differentiable
    /// through its input.
    SinusoidalEmbedding {
        dim: usize,
    },
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LayerSpec::Dense { in_dim, out_dim, .. } => {
                if *in_dim == 0 || *out_dim == 0 {
                    return Err(NnError::Spec("dense dimensions must be >= 1".into()));
                }
            }
            LayerSpec::Conv1d {
                c_in,
                c_out,
                kernel,
                dilation,
                stride,
                ..
            } => {
                if *c_in == 0 || *c_out == 0 {
                    return Err(NnError::Spec("conv1d channels must be >= 1".into()));
                }
                if *kernel < 1 {
                    return Err(NnError::Spec("kernel size must be >= 1".into()));
                }
                if *dilation < 1 {
                    return Err(NnError::Spec("dilation must be >= 1".into()));
                }
                if *stride < 1 {
                    return Err(NnError::Spec("stride must be >= 1".into()));
                }
            }
            LayerSpec::TemporalBlock {
                c_in,
                c_out,
                kernel,
                dilation,
                dropout,
                ..
            } => {
                LayerSpec::Conv1d {
                    c_in: *c_in,
                    c_out: *c_out,
                    kernel: *kernel,
                    dilation: *dilation,
                    stride: 1,
                    bias: true,
                }
                .validate()?;
                if !(0.0..1.0).contains(dropout) {
                    return Err(NnError::Spec(format!(
                        "dropout probability must be in [0, 1), got {dropout}"
                    )));
                }
            }
            LayerSpec::LeakyRelu { slope } => {
                if !slope.is_finite() {
                    return Err(NnError::Spec("leaky-relu slope must be finite".into()));
                }
            }
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(p) {
                    return Err(NnError::Spec(format!(
                        "dropout probability must be in [0, 1), got {p}"
                    )));
                }
            }
            LayerSpec::SpectralNorm { inner, power_iters } => {
                if *power_iters < 1 {
                    return Err(NnError::Spec("power iterations must be >= 1".into()));
                }
                match inner.as_ref() {
                    LayerSpec::Dense { .. } | LayerSpec::Conv1d { .. } => inner.validate()?,
                    other => {
                        return Err(NnError::Spec(format!(
                            "spectral norm wraps Dense or Conv1d, not {other:?}"
                        )))
                    }
                }
            }
            LayerSpec::SinusoidalEmbedding { dim } => {
                if *dim == 0 || dim % 2 != 0 {
                    return Err(NnError::Spec(
                        "sinusoidal embedding dimension must be even and positive".into(),
                    ));
                }
            }
            LayerSpec::Silu | LayerSpec::Tanh => {}
        }
        Ok(())
    }
}

/// A named, validated layer bound to parameter names `<name>.w`,
/// `<name>.b` and (under spectral normalization) `<name>.u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub spec: LayerSpec,
}

impl Layer {
    pub fn new(name: impl Into<String>, spec: LayerSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            name: name.into(),
            spec,
        })
    }

    /// Create this layer's parameters. Weights are centered uniform scaled
    /// by fan-in with a leaky-ReLU(0.2) gain; biases start at zero.
    pub fn init_params<S: Scalar, R: Rng + ?Sized>(
        &self,
        params: &mut ParamSet<S>,
        rng: &mut R,
    ) -> Result<()> {
        match &self.spec {
            LayerSpec::Dense { in_dim, out_dim, bias } => {
                let w = uniform_init::<S, R>(*in_dim, (*in_dim, *out_dim), rng);
                params.insert(&format!("{}.w", self.name), w, true)?;
                if *bias {
                    params.insert(
                        &format!("{}.b", self.name),
                        Array2::zeros((1, *out_dim)),
                        true,
                    )?;
                }
            }
            LayerSpec::Conv1d {
                c_in,
                c_out,
                kernel,
                bias,
                ..
            } => {
                let fan_in = kernel * c_in;
                let w = uniform_init::<S, R>(fan_in, (fan_in, *c_out), rng);
                params.insert(&format!("{}.w", self.name), w, true)?;
                if *bias {
                    params.insert(
                        &format!("{}.b", self.name),
                        Array2::zeros((1, *c_out)),
                        true,
                    )?;
                }
            }
            LayerSpec::TemporalBlock {
                c_in,
                c_out,
                kernel,
                dilation,
                ..
            } => {
                Layer {
                    name: self.name.clone(),
                    spec: LayerSpec::Conv1d {
                        c_in: *c_in,
                        c_out: *c_out,
                        kernel: *kernel,
                        dilation: *dilation,
                        stride: 1,
                        bias: true,
                    },
                }
                .init_params(params, rng)?;
            }
            LayerSpec::SpectralNorm { inner, .. } => {
                Layer {
                    name: self.name.clone(),
                    spec: inner.as_ref().clone(),
                }
                .init_params(params, rng)?;
                let cols = match inner.as_ref() {
                    LayerSpec::Dense { out_dim, .. } => *out_dim,
                    LayerSpec::Conv1d { c_out, .. } => *c_out,
                    _ => unreachable!("validated wrapper"),
                };
                let mut u = Array2::from_shape_fn((1, cols), |_| {
                    S::from_f64(rng.random::<f64>() * 2.0 - 1.0)
                });
                let norm = u.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    u.mapv_inplace(|x| S::from_f64(x.as_f64() / norm));
                } else {
                    u[[0, 0]] = S::one();
                }
                params.insert(&format!("{}.u", self.name), u, false)?;
            }
            LayerSpec::LeakyRelu { .. }
            | LayerSpec::Silu
            | LayerSpec::Tanh
            | LayerSpec::Dropout { .. }
            | LayerSpec::SinusoidalEmbedding { .. } => {}
        }
        Ok(())
    }

    /// Append the layer's computation to a graph.
    pub fn apply<S: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<S>,
        params: &ParamSet<S>,
        x: Var,
        batch: usize,
        rng: &mut R,
    ) -> Result<Var> {
        self.apply_inner(g, params, x, batch, rng, None)
    }

    fn apply_inner<S: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<S>,
        params: &ParamSet<S>,
        x: Var,
        batch: usize,
        rng: &mut R,
        spectral_iters: Option<usize>,
    ) -> Result<Var> {
        let weight_of = |g: &mut Graph<S>, name: &str| -> Result<Var> {
            let w = g.param(params, name)?;
            match spectral_iters {
                Some(iters) => {
                    let u_name = name.strip_suffix(".w").map(|base| format!("{base}.u"));
                    g.spectral_norm(
                        params,
                        w,
                        &u_name.expect("weight name ends in .w"),
                        iters,
                    )
                }
                None => Ok(w),
            }
        };
        match &self.spec {
            LayerSpec::Dense { bias, .. } => {
                let w = weight_of(g, &format!("{}.w", self.name))?;
                let y = g.matmul(x, w)?;
                if *bias {
                    let b = g.param(params, &format!("{}.b", self.name))?;
                    g.add_row(y, b)
                } else {
                    Ok(y)
                }
            }
            LayerSpec::Conv1d {
                kernel,
                dilation,
                stride,
                bias,
                ..
            } => {
                let w = weight_of(g, &format!("{}.w", self.name))?;
                let b = if *bias {
                    Some(g.param(params, &format!("{}.b", self.name))?)
                } else {
                    None
                };
                g.conv1d(x, w, b, batch, *kernel, *dilation, *stride)
            }
            LayerSpec::TemporalBlock {
                kernel,
                dilation,
                activation,
                dropout,
                ..
            } => {
                let conv = Layer {
                    name: self.name.clone(),
                    spec: LayerSpec::Conv1d {
                        c_in: 0,
                        c_out: 0,
                        kernel: *kernel,
                        dilation: *dilation,
                        stride: 1,
                        bias: true,
                    },
                };
                let y = conv.apply_inner(g, params, x, batch, rng, spectral_iters)?;
                let y = activation.apply(g, y);
                g.dropout(y, *dropout, rng)
            }
            LayerSpec::LeakyRelu { slope } => Ok(g.leaky_relu(x, *slope)),
            LayerSpec::Silu => Ok(g.silu(x)),
            LayerSpec::Tanh => Ok(g.tanh(x)),
            LayerSpec::Dropout { p } => g.dropout(x, *p, rng),
            LayerSpec::SpectralNorm { inner, power_iters } => {
                let layer = Layer {
                    name: self.name.clone(),
                    spec: inner.as_ref().clone(),
                };
                layer.apply_inner(g, params, x, batch, rng, Some(*power_iters))
            }
            LayerSpec::SinusoidalEmbedding { dim } => {
                let bins: Vec<usize> = g
                    .value(x)
                    .column(0)
                    .iter()
                    .map(|v| v.as_f64().round().max(0.0) as usize)
                    .collect();
                let rows = crate::embedding::sinusoidal_rows::<S>(&bins, *dim)?;
                Ok(g.input(rows))
            }
        }
    }
}

fn uniform_init<S: Scalar, R: Rng + ?Sized>(
    fan_in: usize,
    shape: (usize, usize),
    rng: &mut R,
) -> Array2<S> {
    // Gain for leaky-ReLU slope 0.2: sqrt(2 / (1 + 0.04)).
    let gain = (2.0 / (1.0 + 0.2f64 * 0.2)).sqrt();
    let bound = gain * (3.0 / fan_in as f64).sqrt();
    Array2::from_shape_fn(shape, |_| {
        S::from_f64((rng.random::<f64>() * 2.0 - 1.0) * bound)
    })
}
