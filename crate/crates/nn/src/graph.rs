//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation as it is built; tensors are dense
//! 2-D matrices. Batched sequence data uses the layout `(batch * steps,
//! channels)` with equal-sized row blocks per sample; operations that need
//! the per-sample structure (convolution, correlation features, per-sample
//! reductions) take the batch size explicitly and validate divisibility.
//!
//! [`Graph::backward`] walks the tape once in reverse, accumulates
//! parameter gradients into a [`GradientMap`] (always `f64`), and retains
//! gradients of watched inputs so samplers can differentiate a score with
//! respect to the data itself.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{NnError, Result};
use crate::params::{GradientMap, ParamSet};
use crate::scalar::Scalar;

/// Forward-pass mode. Dropout is active only in [`Mode::Train`]; spectral
/// normalization persists its power-iteration vector only in train mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handle to a node in the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<S: Scalar> {
    Leaf {
        param: Option<String>,
        watched: bool,
    },
    Add(Var, Var),
    /// Broadcast a `(1, C)` row over all rows of the left operand.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Matmul(Var, Var),
    /// Multiply each per-sample row block of the input by a shared matrix.
    BlockMatmul {
        lhs: Var,
        input: Var,
        batch: usize,
    },
    Conv1d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        batch: usize,
        kernel: usize,
        dilation: usize,
        stride: usize,
        im2col: Array2<S>,
    },
    LeakyRelu(Var, f64),
    Silu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Dropout {
        input: Var,
        mask: Array2<S>,
    },
    ConcatCols(Var, Var),
    /// Stack the per-sample row blocks of two batched tensors along the row
    /// (time) axis: blocks `a_b` of `(ta, C)` and `b_b` of `(tb, C)` become
    /// blocks of `(ta + tb, C)`.
    ConcatRows {
        a: Var,
        b: Var,
        batch: usize,
    },
    SliceCols {
        input: Var,
        start: usize,
        end: usize,
    },
    SliceRows {
        input: Var,
        batch: usize,
        start: usize,
        end: usize,
    },
    MeanAll(Var),
    MeanRows {
        input: Var,
        batch: usize,
    },
    PairwiseCorr {
        input: Var,
        batch: usize,
    },
    SpectralNorm {
        weight: Var,
        sigma: f64,
        u: Array1<f64>,
        v: Array1<f64>,
    },
}

struct Node<S: Scalar> {
    value: Array2<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Numerical stabilizer inside the differentiable correlation feature.
const CORR_EPS: f64 = 1e-8;

pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
    mode: Mode,
    consumed: bool,
    pending_u: Vec<(String, Array2<S>)>,
    retained: Vec<Option<Array2<S>>>,
}

impl<S: Scalar> Graph<S> {
    pub fn new(mode: Mode) -> Self {
        Self {
            nodes: Vec::new(),
            mode,
            consumed: false,
            pending_u: Vec::new(),
            retained: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn push(&mut self, value: Array2<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn require_same(&self, op: &str, a: Var, b: Var) -> Result<()> {
        let da = self.nodes[a.0].value.dim();
        let db = self.nodes[b.0].value.dim();
        if da != db {
            return Err(shape_err(op, &format!("{da:?}"), db));
        }
        Ok(())
    }

    /// Constant input; no gradient flows back into it.
    pub fn input(&mut self, value: Array2<S>) -> Var {
        self.push(
            value,
            Op::Leaf {
                param: None,
                watched: false,
            },
            false,
        )
    }

    /// Input whose gradient is retained and queryable after `backward`.
    pub fn watched_input(&mut self, value: Array2<S>) -> Var {
        self.push(
            value,
            Op::Leaf {
                param: None,
                watched: true,
            },
            true,
        )
    }

    /// Load a named parameter from `params` into the tape.
    pub fn param(&mut self, params: &ParamSet<S>, name: &str) -> Result<Var> {
        let p = params.get(name)?;
        let trainable = p.trainable;
        Ok(self.push(
            p.values.clone(),
            Op::Leaf {
                param: trainable.then(|| name.to_string()),
                watched: false,
            },
            trainable,
        ))
    }

    pub fn value(&self, v: Var) -> &Array2<S> {
        &self.nodes[v.0].value
    }

    /// Value of a `(1, 1)` node as `f64`.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let val = self.value(v);
        if val.dim() != (1, 1) {
            return Err(shape_err("scalar", "(1, 1)", val.dim()));
        }
        Ok(val[[0, 0]].as_f64())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.require_same("add", a, b)?;
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// `a + b` where `b` is a `(1, C)` row broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, ca) = self.nodes[a.0].value.dim();
        let db = self.nodes[b.0].value.dim();
        if db != (1, ca) {
            return Err(shape_err("add_row", &format!("(1, {ca})"), db));
        }
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::AddRow(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.require_same("sub", a, b)?;
        let value = &self.nodes[a.0].value - &self.nodes[b.0].value;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.require_same("mul", a, b)?;
        let value = &self.nodes[a.0].value * &self.nodes[b.0].value;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let f = S::from_f64(factor);
        let value = self.nodes[a.0].value.mapv(|x| x * f);
        let rg = self.needs(a);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.nodes[a.0].value.dim();
        let (rb, cb) = self.nodes[b.0].value.dim();
        if ca != rb {
            return Err(shape_err(
                "matmul",
                &format!("({ra}, k) x (k, {cb})"),
                (ca, rb),
            ));
        }
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Matmul(a, b), rg))
    }

    /// Apply a shared `(m, T)` matrix to every `(T, C)` row block of the
    /// input: `(batch * T, C)` becomes `(batch * m, C)`.
    pub fn block_matmul(&mut self, lhs: Var, input: Var, batch: usize) -> Result<Var> {
        let (rows, c) = self.nodes[input.0].value.dim();
        let t = block_rows("block_matmul", rows, batch)?;
        let (m, lt) = self.nodes[lhs.0].value.dim();
        if lt != t {
            return Err(shape_err("block_matmul", &format!("(m, {t})"), (m, lt)));
        }
        let mut value = Array2::zeros((batch * m, c));
        for b in 0..batch {
            let block = self.nodes[input.0].value.slice(ndarray::s![b * t..(b + 1) * t, ..]);
            value
                .slice_mut(ndarray::s![b * m..(b + 1) * m, ..])
                .assign(&self.nodes[lhs.0].value.dot(&block));
        }
        let rg = self.needs(lhs) || self.needs(input);
        Ok(self.push(value, Op::BlockMatmul { lhs, input, batch }, rg))
    }

    /// Causal 1-D convolution over per-sample row blocks.
    ///
    /// `input` is `(batch * T, c_in)`, `weight` is `(kernel * c_in, c_out)`
    /// (tap-major rows, oldest tap first), `bias` an optional `(1, c_out)`
    /// row. The output row at step `t` only reads input steps `<= t *
    /// stride`; missing history is zero-padded, so the output has
    /// `ceil(T / stride)` rows per sample.
    pub fn conv1d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        batch: usize,
        kernel: usize,
        dilation: usize,
        stride: usize,
    ) -> Result<Var> {
        if kernel < 1 || dilation < 1 || stride < 1 {
            return Err(NnError::Spec(
                "conv1d requires kernel, dilation and stride >= 1".into(),
            ));
        }
        let (rows, c_in) = self.nodes[input.0].value.dim();
        let t = block_rows("conv1d", rows, batch)?;
        let (wr, c_out) = self.nodes[weight.0].value.dim();
        if wr != kernel * c_in {
            return Err(shape_err(
                "conv1d weight",
                &format!("({}, c_out)", kernel * c_in),
                (wr, c_out),
            ));
        }
        if let Some(b) = bias {
            let db = self.nodes[b.0].value.dim();
            if db != (1, c_out) {
                return Err(shape_err("conv1d bias", &format!("(1, {c_out})"), db));
            }
        }
        let t_out = t.div_ceil(stride);
        let x = &self.nodes[input.0].value;
        let mut im2col = Array2::zeros((batch * t_out, kernel * c_in));
        for b in 0..batch {
            for to in 0..t_out {
                for tap in 0..kernel {
                    let offset = (kernel - 1 - tap) * dilation;
                    let ti = (to * stride).checked_sub(offset);
                    if let Some(ti) = ti {
                        if ti < t {
                            for c in 0..c_in {
                                im2col[[b * t_out + to, tap * c_in + c]] = x[[b * t + ti, c]];
                            }
                        }
                    }
                }
            }
        }
        let mut value = im2col.dot(&self.nodes[weight.0].value);
        if let Some(b) = bias {
            value = &value + &self.nodes[b.0].value;
        }
        let rg = self.needs(input)
            || self.needs(weight)
            || bias.map(|b| self.needs(b)).unwrap_or(false);
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                weight,
                bias,
                batch,
                kernel,
                dilation,
                stride,
                im2col,
            },
            rg,
        ))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let s = S::from_f64(slope);
        let value = self.nodes[a.0]
            .value
            .mapv(|x| if x > S::zero() { x } else { x * s });
        let rg = self.needs(a);
        self.push(value, Op::LeakyRelu(a, slope), rg)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x * sigmoid(x));
        let rg = self.needs(a);
        self.push(value, Op::Silu(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.tanh());
        let rg = self.needs(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(sigmoid);
        let rg = self.needs(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    /// Inverted dropout: active in train mode, identity in eval mode.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(NnError::Spec(format!(
                "dropout probability must be in [0, 1), got {p}"
            )));
        }
        if self.mode == Mode::Eval || p == 0.0 {
            return Ok(a);
        }
        let keep = S::from_f64(1.0 / (1.0 - p));
        let dim = self.nodes[a.0].value.dim();
        let mask = Array2::from_shape_fn(dim, |_| {
            if rng.random::<f64>() < p {
                S::zero()
            } else {
                keep
            }
        });
        let value = &self.nodes[a.0].value * &mask;
        let rg = self.needs(a);
        Ok(self.push(value, Op::Dropout { input: a, mask }, rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.nodes[a.0].value.dim();
        let (rb, cb) = self.nodes[b.0].value.dim();
        if ra != rb {
            return Err(shape_err("concat_cols", &format!("({ra}, _)"), (rb, cb)));
        }
        let mut value = Array2::zeros((ra, ca + cb));
        value
            .slice_mut(ndarray::s![.., ..ca])
            .assign(&self.nodes[a.0].value);
        value
            .slice_mut(ndarray::s![.., ca..])
            .assign(&self.nodes[b.0].value);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::ConcatCols(a, b), rg))
    }

    /// Concatenate the per-sample row blocks of two batched tensors along the
    /// row (time) axis, sample by sample.
    pub fn concat_rows(&mut self, a: Var, b: Var, batch: usize) -> Result<Var> {
        let (ra, ca) = self.nodes[a.0].value.dim();
        let (rb, cb) = self.nodes[b.0].value.dim();
        if ca != cb {
            return Err(shape_err("concat_rows", &format!("(_, {ca})"), (rb, cb)));
        }
        let ta = block_rows("concat_rows", ra, batch)?;
        let tb = block_rows("concat_rows", rb, batch)?;
        let t = ta + tb;
        let mut value = Array2::zeros((batch * t, ca));
        for s in 0..batch {
            value
                .slice_mut(ndarray::s![s * t..s * t + ta, ..])
                .assign(&self.nodes[a.0].value.slice(ndarray::s![s * ta..(s + 1) * ta, ..]));
            value
                .slice_mut(ndarray::s![s * t + ta..(s + 1) * t, ..])
                .assign(&self.nodes[b.0].value.slice(ndarray::s![s * tb..(s + 1) * tb, ..]));
        }
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::ConcatRows { a, b, batch }, rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (_, c) = self.nodes[a.0].value.dim();
        if start >= end || end > c {
            return Err(NnError::Spec(format!(
                "slice_cols [{start}, {end}) out of range for {c} columns"
            )));
        }
        let value = self.nodes[a.0]
            .value
            .slice(ndarray::s![.., start..end])
            .to_owned();
        let rg = self.needs(a);
        Ok(self.push(value, Op::SliceCols { input: a, start, end }, rg))
    }

    /// Take rows `[start, end)` from each per-sample block.
    pub fn slice_rows(&mut self, a: Var, batch: usize, start: usize, end: usize) -> Result<Var> {
        let (rows, c) = self.nodes[a.0].value.dim();
        let t = block_rows("slice_rows", rows, batch)?;
        if start >= end || end > t {
            return Err(NnError::Spec(format!(
                "slice_rows [{start}, {end}) out of range for block of {t} rows"
            )));
        }
        let mut value = Array2::zeros((batch * (end - start), c));
        for b in 0..batch {
            value
                .slice_mut(ndarray::s![b * (end - start)..(b + 1) * (end - start), ..])
                .assign(&self.nodes[a.0].value.slice(ndarray::s![
                    b * t + start..b * t + end,
                    ..
                ]));
        }
        let rg = self.needs(a);
        Ok(self.push(
            value,
            Op::SliceRows {
                input: a,
                batch,
                start,
                end,
            },
            rg,
        ))
    }

    /// Mean of every entry, as a `(1, 1)` tensor. Accumulates in `f64`.
    pub fn mean_all(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let mean = v.iter().map(|x| x.as_f64()).sum::<f64>() / v.len() as f64;
        let value = Array2::from_elem((1, 1), S::from_f64(mean));
        let rg = self.needs(a);
        self.push(value, Op::MeanAll(a), rg)
    }

    /// Per-sample mean over each row block: `(batch * T, C)` to `(batch, C)`.
    pub fn mean_rows(&mut self, a: Var, batch: usize) -> Result<Var> {
        let (rows, c) = self.nodes[a.0].value.dim();
        let t = block_rows("mean_rows", rows, batch)?;
        let x = &self.nodes[a.0].value;
        let mut value = Array2::zeros((batch, c));
        for b in 0..batch {
            for j in 0..c {
                let sum: f64 = (0..t).map(|r| x[[b * t + r, j]].as_f64()).sum();
                value[[b, j]] = S::from_f64(sum / t as f64);
            }
        }
        let rg = self.needs(a);
        Ok(self.push(value, Op::MeanRows { input: a, batch }, rg))
    }

    /// Pairwise Pearson correlation of the channels of each row block:
    /// `(batch * T, C)` to `(batch, C·(C−1)/2)`, pairs in lexicographic
    /// `(i, j), i < j` order. Variances are stabilized by a small epsilon so
    /// the feature stays differentiable on constant channels.
    pub fn pairwise_corr(&mut self, a: Var, batch: usize) -> Result<Var> {
        let (rows, c) = self.nodes[a.0].value.dim();
        let t = block_rows("pairwise_corr", rows, batch)?;
        if c < 2 {
            return Err(NnError::Spec(
                "pairwise_corr requires at least 2 channels".into(),
            ));
        }
        if t < 2 {
            return Err(NnError::Spec(
                "pairwise_corr requires at least 2 rows per sample".into(),
            ));
        }
        let x = &self.nodes[a.0].value;
        let n_pairs = c * (c - 1) / 2;
        let mut value = Array2::zeros((batch, n_pairs));
        for b in 0..batch {
            let stats = CorrStats::compute(x, b * t, t, c);
            for (p, &(i, j)) in stats.pairs.iter().enumerate() {
                value[[b, p]] = S::from_f64(stats.rho[p].clamp(-1.0, 1.0));
                debug_assert!(i < j);
            }
        }
        let rg = self.needs(a);
        Ok(self.push(value, Op::PairwiseCorr { input: a, batch }, rg))
    }

    /// Divide a weight matrix by its largest singular value, estimated by
    /// power iteration from the persisted vector `u_name` in `params`.
    ///
    /// The updated `u` is queued and only written back to the parameter set
    /// by the caller (see [`Graph::take_u_updates`]); in eval mode no update
    /// is queued. Gradients treat the estimated `sigma` and its singular
    /// vectors as constants, which is the usual practice.
    pub fn spectral_norm(
        &mut self,
        params: &ParamSet<S>,
        weight: Var,
        u_name: &str,
        iters: usize,
    ) -> Result<Var> {
        if iters < 1 {
            return Err(NnError::Spec("spectral_norm requires iters >= 1".into()));
        }
        let w = &self.nodes[weight.0].value;
        let (r, c) = w.dim();
        let u_param = params.get(u_name)?;
        if u_param.values.dim() != (1, c) {
            return Err(shape_err(
                "spectral_norm u",
                &format!("(1, {c})"),
                u_param.values.dim(),
            ));
        }
        let wf: Array2<f64> = w.mapv(Scalar::as_f64);
        let mut u: Array1<f64> = u_param.values.row(0).mapv(Scalar::as_f64);
        let mut v: Array1<f64> = Array1::zeros(r);
        for _ in 0..iters {
            v = wf.dot(&u);
            normalize(&mut v);
            u = wf.t().dot(&v);
            normalize(&mut u);
        }
        let sigma = v.dot(&wf.dot(&u)).max(1e-12);
        let inv = S::from_f64(1.0 / sigma);
        let value = w.mapv(|x| x * inv);
        if self.mode == Mode::Train {
            let u_row = Array2::from_shape_fn((1, c), |(_, j)| S::from_f64(u[j]));
            self.pending_u.push((u_name.to_string(), u_row));
        }
        let rg = self.needs(weight);
        Ok(self.push(
            value,
            Op::SpectralNorm {
                weight,
                sigma,
                u,
                v,
            },
            rg,
        ))
    }

    /// Updated power-iteration vectors queued during the forward pass, to be
    /// written back into the parameter set by the trainer.
    pub fn take_u_updates(&mut self) -> Vec<(String, Array2<S>)> {
        std::mem::take(&mut self.pending_u)
    }

    /// Reverse sweep from a scalar loss. Returns parameter gradients; input
    /// gradients of watched leaves are retained for [`Graph::input_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<GradientMap> {
        if self.consumed {
            return Err(NnError::Backward(
                "backward already called on this recording".into(),
            ));
        }
        self.consumed = true;
        let dim = self.nodes[loss.0].value.dim();
        if dim != (1, 1) {
            return Err(shape_err("backward loss", "(1, 1)", dim));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Array2<S>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Array2::from_elem((1, 1), S::one()));
        self.retained = (0..n).map(|_| None).collect();
        let mut param_grads = GradientMap::new();

        for i in (0..n).rev() {
            if !self.nodes[i].requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf { param, watched } => {
                    if let Some(name) = param {
                        param_grads.accumulate(name, &g);
                    }
                    if *watched {
                        self.retained[i] = Some(g);
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g);
                }
                Op::AddRow(a, b) => {
                    let (a, b) = (*a, *b);
                    let col_sums = sum_rows_f64(&g);
                    accumulate(&mut grads, a, g);
                    accumulate(&mut grads, b, col_sums);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g.mapv(|x| -x));
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = &g * &self.nodes[b.0].value;
                    let gb = &g * &self.nodes[a.0].value;
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::Scale(a, f) => {
                    let (a, f) = (*a, S::from_f64(*f));
                    accumulate(&mut grads, a, g.mapv(|x| x * f));
                }
                Op::Matmul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = g.dot(&self.nodes[b.0].value.t());
                    let gb = self.nodes[a.0].value.t().dot(&g);
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::BlockMatmul { lhs, input, batch } => {
                    let (lhs, input, batch) = (*lhs, *input, *batch);
                    let (rows, _) = self.nodes[input.0].value.dim();
                    let t = rows / batch;
                    let m = self.nodes[lhs.0].value.nrows();
                    let mut g_lhs = Array2::zeros(self.nodes[lhs.0].value.dim());
                    let mut g_in = Array2::zeros(self.nodes[input.0].value.dim());
                    for s in 0..batch {
                        let gb = g.slice(ndarray::s![s * m..(s + 1) * m, ..]);
                        let xb = self.nodes[input.0].value.slice(ndarray::s![s * t..(s + 1) * t, ..]);
                        g_lhs = g_lhs + gb.dot(&xb.t());
                        g_in.slice_mut(ndarray::s![s * t..(s + 1) * t, ..])
                            .assign(&self.nodes[lhs.0].value.t().dot(&gb));
                    }
                    accumulate(&mut grads, lhs, g_lhs);
                    accumulate(&mut grads, input, g_in);
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    batch,
                    kernel,
                    dilation,
                    stride,
                    im2col,
                } => {
                    let (input, weight, bias) = (*input, *weight, *bias);
                    let (batch, kernel, dilation, stride) = (*batch, *kernel, *dilation, *stride);
                    let gw = im2col.t().dot(&g);
                    let (rows, c_in) = self.nodes[input.0].value.dim();
                    let t = rows / batch;
                    let t_out = t.div_ceil(stride);
                    let g_cols = g.dot(&self.nodes[weight.0].value.t());
                    let mut gx = Array2::zeros((rows, c_in));
                    for b in 0..batch {
                        for to in 0..t_out {
                            for tap in 0..kernel {
                                let offset = (kernel - 1 - tap) * dilation;
                                let Some(ti) = (to * stride).checked_sub(offset) else {
                                    continue;
                                };
                                if ti >= t {
                                    continue;
                                }
                                for c in 0..c_in {
                                    gx[[b * t + ti, c]] = gx[[b * t + ti, c]]
                                        + g_cols[[b * t_out + to, tap * c_in + c]];
                                }
                            }
                        }
                    }
                    if let Some(bv) = bias {
                        accumulate(&mut grads, bv, sum_rows_f64(&g));
                    }
                    accumulate(&mut grads, weight, gw);
                    accumulate(&mut grads, input, gx);
                }
                Op::LeakyRelu(a, slope) => {
                    let (a, s) = (*a, S::from_f64(*slope));
                    let x = &self.nodes[a.0].value;
                    let mut ga = g;
                    ndarray::Zip::from(&mut ga).and(x).for_each(|gi, &xi| {
                        if xi <= S::zero() {
                            *gi = *gi * s;
                        }
                    });
                    accumulate(&mut grads, a, ga);
                }
                Op::Silu(a) => {
                    let a = *a;
                    let x = &self.nodes[a.0].value;
                    let mut ga = g;
                    ndarray::Zip::from(&mut ga).and(x).for_each(|gi, &xi| {
                        let sig = sigmoid(xi);
                        *gi = *gi * (sig * (S::one() + xi * (S::one() - sig)));
                    });
                    accumulate(&mut grads, a, ga);
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let y = &self.nodes[i].value;
                    let mut ga = g;
                    ndarray::Zip::from(&mut ga).and(y).for_each(|gi, &yi| {
                        *gi = *gi * (S::one() - yi * yi);
                    });
                    accumulate(&mut grads, a, ga);
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let y = &self.nodes[i].value;
                    let mut ga = g;
                    ndarray::Zip::from(&mut ga).and(y).for_each(|gi, &yi| {
                        *gi = *gi * yi * (S::one() - yi);
                    });
                    accumulate(&mut grads, a, ga);
                }
                Op::Dropout { input, mask } => {
                    let input = *input;
                    let ga = &g * mask;
                    accumulate(&mut grads, input, ga);
                }
                Op::ConcatCols(a, b) => {
                    let (a, b) = (*a, *b);
                    let ca = self.nodes[a.0].value.ncols();
                    let ga = g.slice(ndarray::s![.., ..ca]).to_owned();
                    let gb = g.slice(ndarray::s![.., ca..]).to_owned();
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::ConcatRows { a, b, batch } => {
                    let (a, b, batch) = (*a, *b, *batch);
                    let dim_a = self.nodes[a.0].value.dim();
                    let dim_b = self.nodes[b.0].value.dim();
                    let (ta, tb) = (dim_a.0 / batch, dim_b.0 / batch);
                    let t = ta + tb;
                    let mut ga = Array2::zeros(dim_a);
                    let mut gb = Array2::zeros(dim_b);
                    for s in 0..batch {
                        ga.slice_mut(ndarray::s![s * ta..(s + 1) * ta, ..])
                            .assign(&g.slice(ndarray::s![s * t..s * t + ta, ..]));
                        gb.slice_mut(ndarray::s![s * tb..(s + 1) * tb, ..])
                            .assign(&g.slice(ndarray::s![s * t + ta..(s + 1) * t, ..]));
                    }
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::SliceCols { input, start, end } => {
                    let (input, start, end) = (*input, *start, *end);
                    let dim = self.nodes[input.0].value.dim();
                    let mut gx = Array2::zeros(dim);
                    gx.slice_mut(ndarray::s![.., start..end]).assign(&g);
                    accumulate(&mut grads, input, gx);
                }
                Op::SliceRows {
                    input,
                    batch,
                    start,
                    end,
                } => {
                    let (input, batch, start, end) = (*input, *batch, *start, *end);
                    let dim = self.nodes[input.0].value.dim();
                    let t = dim.0 / batch;
                    let len = end - start;
                    let mut gx = Array2::zeros(dim);
                    for b in 0..batch {
                        gx.slice_mut(ndarray::s![b * t + start..b * t + end, ..])
                            .assign(&g.slice(ndarray::s![b * len..(b + 1) * len, ..]));
                    }
                    accumulate(&mut grads, input, gx);
                }
                Op::MeanAll(a) => {
                    let a = *a;
                    let dim = self.nodes[a.0].value.dim();
                    let scale = S::from_f64(g[[0, 0]].as_f64() / (dim.0 * dim.1) as f64);
                    accumulate(&mut grads, a, Array2::from_elem(dim, scale));
                }
                Op::MeanRows { input, batch } => {
                    let (input, batch) = (*input, *batch);
                    let dim = self.nodes[input.0].value.dim();
                    let t = dim.0 / batch;
                    let inv = 1.0 / t as f64;
                    let mut gx = Array2::zeros(dim);
                    for b in 0..batch {
                        for j in 0..dim.1 {
                            let gv = S::from_f64(g[[b, j]].as_f64() * inv);
                            for r in 0..t {
                                gx[[b * t + r, j]] = gv;
                            }
                        }
                    }
                    accumulate(&mut grads, input, gx);
                }
                Op::PairwiseCorr { input, batch } => {
                    let (input, batch) = (*input, *batch);
                    let x = &self.nodes[input.0].value;
                    let (rows, c) = x.dim();
                    let t = rows / batch;
                    let mut gx: Array2<f64> = Array2::zeros((rows, c));
                    for b in 0..batch {
                        let stats = CorrStats::compute(x, b * t, t, c);
                        for (p, &(fi, fj)) in stats.pairs.iter().enumerate() {
                            let go = g[[b, p]].as_f64();
                            if go == 0.0 {
                                continue;
                            }
                            let d = stats.denom[p];
                            let rho = stats.rho[p];
                            let sii = stats.var[fi] + CORR_EPS;
                            let sjj = stats.var[fj] + CORR_EPS;
                            for r in 0..t {
                                let ci = stats.centered[[r, fi]];
                                let cj = stats.centered[[r, fj]];
                                gx[[b * t + r, fi]] += go * (cj / d - rho * ci / sii);
                                gx[[b * t + r, fj]] += go * (ci / d - rho * cj / sjj);
                            }
                        }
                    }
                    accumulate(&mut grads, input, gx.mapv(S::from_f64));
                }
                Op::SpectralNorm {
                    weight,
                    sigma,
                    u,
                    v,
                } => {
                    let weight_var = *weight;
                    let sigma = *sigma;
                    let wbar = &self.nodes[i].value;
                    let inner: f64 = g
                        .iter()
                        .zip(wbar.iter())
                        .map(|(a, b)| a.as_f64() * b.as_f64())
                        .sum();
                    let (r, c) = wbar.dim();
                    let gw = Array2::from_shape_fn((r, c), |(ri, ci)| {
                        S::from_f64(g[[ri, ci]].as_f64() / sigma - inner / sigma * v[ri] * u[ci])
                    });
                    accumulate(&mut grads, weight_var, gw);
                }
            }
        }
        Ok(param_grads)
    }

    /// Gradient of the loss with respect to a watched input, available after
    /// [`Graph::backward`].
    pub fn input_grad(&self, v: Var) -> Option<&Array2<S>> {
        self.retained.get(v.0).and_then(Option::as_ref)
    }
}

fn accumulate<S: Scalar>(grads: &mut [Option<Array2<S>>], v: Var, g: Array2<S>) {
    match &mut grads[v.0] {
        Some(acc) => *acc = &*acc + &g,
        slot @ None => *slot = Some(g),
    }
}

/// Column sums as a `(1, C)` row, accumulated in `f64`.
fn sum_rows_f64<S: Scalar>(g: &Array2<S>) -> Array2<S> {
    let c = g.ncols();
    Array2::from_shape_fn((1, c), |(_, j)| {
        S::from_f64(g.index_axis(Axis(1), j).iter().map(|x| x.as_f64()).sum())
    })
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

fn normalize(v: &mut Array1<f64>) {
    let n = v.dot(&*v).sqrt().max(1e-12);
    *v /= n;
}

fn block_rows(op: &str, rows: usize, batch: usize) -> Result<usize> {
    if batch == 0 || rows % batch != 0 {
        return Err(NnError::Shape {
            op: op.into(),
            expected: format!("row count divisible by batch {batch}"),
            actual: format!("{rows} rows"),
        });
    }
    Ok(rows / batch)
}

fn shape_err(op: &str, expected: &str, actual: impl std::fmt::Debug) -> NnError {
    NnError::Shape {
        op: op.into(),
        expected: expected.into(),
        actual: format!("{actual:?}"),
    }
}

/// Shared forward/backward statistics of the correlation feature, computed
/// in `f64`.
struct CorrStats {
    pairs: Vec<(usize, usize)>,
    centered: Array2<f64>,
    var: Vec<f64>,
    rho: Vec<f64>,
    denom: Vec<f64>,
}

impl CorrStats {
    fn compute<S: Scalar>(x: &Array2<S>, row0: usize, t: usize, c: usize) -> Self {
        let mut centered = Array2::zeros((t, c));
        let mut var = vec![0.0; c];
        for j in 0..c {
            let mean: f64 = (0..t).map(|r| x[[row0 + r, j]].as_f64()).sum::<f64>() / t as f64;
            for r in 0..t {
                let cv = x[[row0 + r, j]].as_f64() - mean;
                centered[[r, j]] = cv;
                var[j] += cv * cv;
            }
        }
        let mut pairs = Vec::new();
        let mut rho = Vec::new();
        let mut denom = Vec::new();
        for i in 0..c {
            for j in i + 1..c {
                let sij: f64 = (0..t).map(|r| centered[[r, i]] * centered[[r, j]]).sum();
                let d = ((var[i] + CORR_EPS) * (var[j] + CORR_EPS)).sqrt();
                pairs.push((i, j));
                denom.push(d);
                rho.push(sij / d);
            }
        }
        Self {
            pairs,
            centered,
            var,
            rho,
            denom,
        }
    }
}
