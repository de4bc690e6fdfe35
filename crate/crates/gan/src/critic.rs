//! Two-head critic: a spectral-normalized convolutional score over the full
//! window plus a correlation head over the future window, combined as
//! `o = o1 + alpha * o2`.

use ndarray::Array2;

use comets_nn::{sinusoidal_rows, Graph, Mode, ParamSet, Scalar, Var};

use crate::config::CriticConfig;
use crate::error::{GanError, Result};
use crate::generator::check_bins;

/// Critic score and its two components.
#[derive(Debug, Clone, Copy)]
pub struct CriticScore {
    /// Combined score `o = o1 + alpha * o2`, shape `(batch, 1)`.
    pub o: Var,
    /// Convolutional-stack score.
    pub o1: Var,
    /// Correlation-head score.
    pub o2: Var,
}

/// Pearson coefficients of every unordered channel pair of each per-sample
/// block, ordered lexicographically by `(i, j)` with `i < j`. Differentiable;
/// constant channels contribute 0.
pub fn pairwise_correlation_features<S: Scalar>(
    g: &mut Graph<S>,
    x: Var,
    batch: usize,
) -> Result<Var> {
    Ok(g.pairwise_corr(x, batch)?)
}

/// Run the critic on a batch of full windows.
///
/// `x_full` is `(batch * (P + F), C)`: each per-sample block is the past
/// window followed by the real or generated future. `minute_bins` holds one
/// bin per row of `x_full`.
pub fn critic_forward<S: Scalar>(
    g: &mut Graph<S>,
    cfg: &CriticConfig,
    params: &ParamSet<S>,
    x_full: Var,
    minute_bins: &[usize],
    batch: usize,
) -> Result<CriticScore> {
    cfg.validate()?;
    let (p, f, c) = (cfg.past_len, cfg.future_len, cfg.channels);
    let t = p + f;
    let rows = batch * t;
    let got = g.value(x_full).dim();
    if got != (rows, c) {
        return Err(GanError::Input(format!(
            "critic expects x_full of ({rows}, {c}), got {got:?}"
        )));
    }
    check_bins(minute_bins, rows, "critic")?;

    // Time embedding, concatenated as one additional channel.
    let sin = g.input(sinusoidal_rows(minute_bins, cfg.time_embed_dim)?);
    let t0 = sn_dense(g, cfg, params, sin, "critic.time_mlp.0")?;
    let t0 = g.silu(t0);
    let temb = sn_dense(g, cfg, params, t0, "critic.time_mlp.1")?;
    let mut hidden = g.concat_cols(x_full, temb)?;

    // Strided spectral-normalized convolution stack.
    for k in 0..cfg.conv_channels.len() {
        let name = format!("critic.conv{k}.w");
        let w = g.param(params, &name)?;
        let wn = g.spectral_norm(params, w, &format!("{name}.u"), cfg.power_iters)?;
        let b = g.param(params, &format!("critic.conv{k}.b"))?;
        let conv = g.conv1d(
            hidden,
            wn,
            Some(b),
            batch,
            cfg.conv_kernel,
            1,
            cfg.conv_stride,
        )?;
        hidden = g.leaky_relu(conv, 0.2);
    }

    // Position-wise linear stack down to one score per remaining step, then
    // the temporal mean per sample.
    for k in 0..cfg.linear.len() - 1 {
        hidden = sn_dense(g, cfg, params, hidden, &format!("critic.lin{k}"))?;
        if k + 2 < cfg.linear.len() {
            hidden = g.leaky_relu(hidden, 0.2);
        }
    }
    let o1 = g.mean_rows(hidden, batch)?;

    // Correlation head over the future window only.
    let future = g.slice_rows(x_full, batch, p, t)?;
    let corr = pairwise_correlation_features(g, future, batch)?;
    let o2 = sn_dense(g, cfg, params, corr, "critic.corr")?;

    let scaled = g.scale(o2, cfg.alpha);
    let o = g.add(o1, scaled)?;
    Ok(CriticScore { o, o1, o2 })
}

/// Spectral-normalized dense layer `x @ SN({name}.w) + {name}.b`.
fn sn_dense<S: Scalar>(
    g: &mut Graph<S>,
    cfg: &CriticConfig,
    params: &ParamSet<S>,
    x: Var,
    name: &str,
) -> Result<Var> {
    let w = g.param(params, &format!("{name}.w"))?;
    let wn = g.spectral_norm(params, w, &format!("{name}.w.u"), cfg.power_iters)?;
    let b = g.param(params, &format!("{name}.b"))?;
    let y = g.matmul(x, wn)?;
    Ok(g.add_row(y, b)?)
}

/// Gradient of the summed critic score with respect to the future window:
/// `d o_s / d x_future_s` for every sample `s`, shape `(batch * F, C)`.
///
/// Used by guided diffusion sampling, which follows the critic uphill.
pub fn critic_future_gradient<S: Scalar>(
    cfg: &CriticConfig,
    params: &ParamSet<S>,
    x_past: &Array2<S>,
    x_future: &Array2<S>,
    minute_bins: &[usize],
    batch: usize,
) -> Result<Array2<S>> {
    let f = cfg.future_len;
    let mut g: Graph<S> = Graph::new(Mode::Eval);
    let past = g.input(x_past.clone());
    let future = g.watched_input(x_future.clone());
    let full = g.concat_rows(past, future, batch)?;
    let score = critic_forward(&mut g, cfg, params, full, minute_bins, batch)?;
    // Each sample's score depends only on its own rows, so the gradient of
    // the batch sum recovers every per-sample gradient at once.
    let mean = g.mean_all(score.o);
    let sum = g.scale(mean, batch as f64);
    g.backward(sum)?;
    let grad = g
        .input_grad(future)
        .ok_or_else(|| GanError::Input("critic gradient was not retained".into()))?
        .clone();
    debug_assert_eq!(grad.dim(), (batch * f, x_future.ncols()));
    Ok(grad)
}
