//! Generator forward pass: seven dilated causal temporal blocks with the
//! time-conditioned noise re-injected at every block, followed by a factored
//! linear head that maps the hidden sequence to the future window.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use comets_nn::{sinusoidal_rows, Graph, Mode, ParamSet, Scalar, Var};

use crate::config::{GeneratorConfig, TIME_BINS};
use crate::error::{GanError, Result};

/// Sample a standard-normal noise block of shape `(batch * P, C)`.
pub fn sample_noise<S: Scalar>(
    cfg: &GeneratorConfig,
    batch: usize,
    rng: &mut impl Rng,
) -> Array2<S> {
    Array2::from_shape_fn((batch * cfg.past_len, cfg.noise_width), |_| {
        S::from_f64(rng.sample::<f64, _>(StandardNormal))
    })
}

/// Check a bin slice against the expected row count and the session range.
pub(crate) fn check_bins(bins: &[usize], rows: usize, what: &str) -> Result<()> {
    if bins.len() != rows {
        return Err(GanError::Input(format!(
            "{what}: {} minute bins for {rows} rows",
            bins.len()
        )));
    }
    if let Some(b) = bins.iter().find(|b| **b >= TIME_BINS) {
        return Err(GanError::Input(format!(
            "{what}: minute bin {b} outside [0, {}]",
            TIME_BINS - 1
        )));
    }
    Ok(())
}

/// Run the generator on a batch.
///
/// `x_past` and `noise` are `(batch * P, C)` nodes; `minute_bins` holds one
/// 10-minute bin per past row. Output is `(batch * F, C)` with volume
/// channels squashed through tanh and all other channels unbounded.
pub fn generator_forward<S: Scalar>(
    g: &mut Graph<S>,
    cfg: &GeneratorConfig,
    params: &ParamSet<S>,
    x_past: Var,
    noise: Var,
    minute_bins: &[usize],
    batch: usize,
    dropout_rng: &mut impl Rng,
) -> Result<Var> {
    cfg.validate()?;
    let (p, c) = (cfg.past_len, cfg.channels);
    let rows = batch * p;
    let got = g.value(x_past).dim();
    if got != (rows, c) {
        return Err(GanError::Input(format!(
            "generator expects x_past of ({rows}, {c}), got {got:?}"
        )));
    }
    if g.value(noise).dim() != (rows, c) {
        return Err(GanError::Input(format!(
            "generator expects noise of ({rows}, {c}), got {:?}",
            g.value(noise).dim()
        )));
    }
    check_bins(minute_bins, rows, "generator")?;

    // Time embedding: sinusoidal features through a 2-layer SiLU MLP, added
    // directly to the noise.
    let sin = g.input(sinusoidal_rows(minute_bins, cfg.time_embed_dim)?);
    let t0 = dense(g, params, sin, "gen.time_mlp.0")?;
    let t0 = g.silu(t0);
    let t1 = dense(g, params, t0, "gen.time_mlp.1")?;
    let z = g.add(noise, t1)?;

    // Temporal blocks; each consumes the previous output concatenated with
    // the conditioned noise along the feature axis.
    let mut hidden = g.concat_cols(x_past, z)?;
    for (k, &dilation) in cfg.dilations.iter().enumerate() {
        let w = g.param(params, &format!("gen.block{k}.w"))?;
        let b = g.param(params, &format!("gen.block{k}.b"))?;
        let conv = g.conv1d(hidden, w, Some(b), batch, cfg.kernel, dilation, 1)?;
        let act = g.leaky_relu(conv, 0.2);
        let out = g.dropout(act, cfg.dropout, dropout_rng)?;
        hidden = if k + 1 < cfg.dilations.len() {
            g.concat_cols(out, z)?
        } else {
            out
        };
    }

    // Factored head: shared (F x P) time projection, then a position-wise
    // feature map H -> C.
    let head_time = g.param(params, "gen.head_time")?;
    let projected = g.block_matmul(head_time, hidden, batch)?;
    let y = dense(g, params, projected, "gen.head_out")?;

    // Volume channels are bounded by tanh; other channels pass through.
    let volume_mask: Array2<S> = Array2::from_shape_fn((batch * cfg.future_len, c), |(_, j)| {
        if cfg.channel_kinds[j] == comets_core::ChannelKind::Volume {
            S::one()
        } else {
            S::zero()
        }
    });
    if volume_mask.iter().any(|m| *m != S::zero()) {
        let inverse: Array2<S> = volume_mask.mapv(|m| S::one() - m);
        let mask = g.input(volume_mask);
        let inv = g.input(inverse);
        let bounded = g.tanh(y);
        let kept = g.mul(y, inv)?;
        let squashed = g.mul(bounded, mask)?;
        g.add(kept, squashed)
    } else {
        Ok(y)
    }
    .map_err(GanError::from)
}

/// Matmul plus bias row: `x @ {name}.w + {name}.b`.
fn dense<S: Scalar>(
    g: &mut Graph<S>,
    params: &ParamSet<S>,
    x: Var,
    name: &str,
) -> Result<Var> {
    let w = g.param(params, &format!("{name}.w"))?;
    let b = g.param(params, &format!("{name}.b"))?;
    let y = g.matmul(x, w)?;
    Ok(g.add_row(y, b)?)
}

/// Convenience wrapper: one full Eval-mode generator run on raw arrays.
pub fn generate<S: Scalar>(
    cfg: &GeneratorConfig,
    params: &ParamSet<S>,
    x_past: &Array2<S>,
    noise: &Array2<S>,
    minute_bins: &[usize],
    batch: usize,
) -> Result<Array2<S>> {
    let mut g: Graph<S> = Graph::new(Mode::Eval);
    let past = g.input(x_past.clone());
    let z = g.input(noise.clone());
    // Dropout is inactive in Eval mode; the RNG is never consulted.
    let mut rng = comets_core::rng::substream(0, "gan.eval.unused");
    let out = generator_forward(&mut g, cfg, params, past, z, minute_bins, batch, &mut rng)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_generator;
    use comets_core::ChannelKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(cfg: &GeneratorConfig) -> ParamSet<f64> {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        init_generator(&mut params, cfg, &mut rng).unwrap();
        params
    }

    fn raw_cfg() -> GeneratorConfig {
        let mut cfg = GeneratorConfig::synthetic(3);
        cfg.past_len = 10;
        cfg.future_len = 6;
        cfg.hidden = 8;
        cfg.time_embed_dim = 4;
        cfg
    }

    #[test]
    fn output_shape_is_future_by_channels() {
        let cfg = raw_cfg();
        let params = setup(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let past = Array2::from_shape_fn((2 * 10, 3), |_| rng.random::<f64>());
        let noise = sample_noise::<f64>(&cfg, 2, &mut rng);
        let bins = vec![0usize; 2 * 10];
        let out = generate(&cfg, &params, &past, &noise, &bins, 2).unwrap();
        assert_eq!(out.dim(), (2 * 6, 3));
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let cfg = raw_cfg();
        let params = setup(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let past = Array2::from_shape_fn((10, 3), |_| rng.random::<f64>());
        let noise = sample_noise::<f64>(&cfg, 1, &mut rng);
        let bins: Vec<usize> = (0..10).collect();
        let a = generate(&cfg, &params, &past, &noise, &bins, 1).unwrap();
        let b = generate(&cfg, &params, &past, &noise, &bins, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_noise_changes_the_output() {
        let cfg = raw_cfg();
        let params = setup(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let past = Array2::from_shape_fn((10, 3), |_| rng.random::<f64>());
        let z1 = sample_noise::<f64>(&cfg, 1, &mut rng);
        let z2 = sample_noise::<f64>(&cfg, 1, &mut rng);
        let bins = vec![5usize; 10];
        let a = generate(&cfg, &params, &past, &z1, &bins, 1).unwrap();
        let b = generate(&cfg, &params, &past, &z2, &bins, 1).unwrap();
        let max_diff = (&a - &b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_diff > 0.0, "noise had no effect on the output");
    }

    #[test]
    fn perturbing_the_past_changes_the_output() {
        let cfg = raw_cfg();
        let params = setup(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let past = Array2::from_shape_fn((10, 3), |_| rng.random::<f64>());
        let noise = sample_noise::<f64>(&cfg, 1, &mut rng);
        let bins = vec![7usize; 10];
        let a = generate(&cfg, &params, &past, &noise, &bins, 1).unwrap();
        let mut shifted = past.clone();
        shifted[[0, 0]] += 0.5;
        let b = generate(&cfg, &params, &shifted, &noise, &bins, 1).unwrap();
        let max_diff = (&a - &b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_diff > 0.0, "past conditioning had no effect");
    }

    #[test]
    fn volume_channels_are_bounded_and_price_channels_are_not() {
        let mut cfg = raw_cfg();
        cfg.channel_kinds = vec![ChannelKind::Price, ChannelKind::Volume, ChannelKind::Price];
        let params = setup(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // Extreme inputs drive pre-activation outputs far outside [-1, 1].
        let past = Array2::from_shape_fn((10, 3), |_| 50.0 * rng.random::<f64>());
        let noise = sample_noise::<f64>(&cfg, 1, &mut rng);
        let bins = vec![0usize; 10];
        let out = generate(&cfg, &params, &past, &noise, &bins, 1).unwrap();
        for r in 0..out.nrows() {
            assert!(out[[r, 1]].abs() <= 1.0, "volume channel escaped tanh");
        }
        let max_price = out.column(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_price > 1.0, "price channel unexpectedly bounded");
    }

    #[test]
    fn invalid_minute_bins_are_rejected() {
        let cfg = raw_cfg();
        let params = setup(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let past = Array2::from_shape_fn((10, 3), |_| rng.random::<f64>());
        let noise = sample_noise::<f64>(&cfg, 1, &mut rng);
        let bins = vec![39usize; 10];
        assert!(generate(&cfg, &params, &past, &noise, &bins, 1).is_err());
    }
}
