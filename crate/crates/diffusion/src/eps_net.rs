//! Forward pass of the noise predictor.

use comets_nn::{sinusoidal_rows, Graph, ParamSet, Scalar, Var};

use crate::error::{DiffusionError, Result};
use crate::model::EpsNetConfig;

/// Predict the noise inside `x_t`.
///
/// `x` is `(batch * F, C)`; `steps` holds one diffusion step (`>= 1`) per
/// sample. The step is embedded sinusoidally, passed through a two-layer
/// MLP, and added to the hidden state after the first temporal block; the
/// remaining blocks and a position-wise head map back to `(batch * F, C)`.
pub fn eps_forward<S: Scalar>(
    g: &mut Graph<S>,
    cfg: &EpsNetConfig,
    params: &ParamSet<S>,
    x: Var,
    steps: &[usize],
    batch: usize,
) -> Result<Var> {
    cfg.validate()?;
    let (f, c) = (cfg.future_len, cfg.channels);
    let rows = batch * f;
    let got = g.value(x).dim();
    if got != (rows, c) {
        return Err(DiffusionError::Input(format!(
            "denoiser expects ({rows}, {c}), got {got:?}"
        )));
    }
    if steps.len() != batch {
        return Err(DiffusionError::Input(format!(
            "{} diffusion steps for a batch of {batch}",
            steps.len()
        )));
    }
    if let Some(t) = steps.iter().find(|t| **t == 0) {
        return Err(DiffusionError::Input(format!(
            "diffusion step must be >= 1, got {t}"
        )));
    }

    // Per-row step index, then the embedding MLP.
    let mut row_steps = Vec::with_capacity(rows);
    for &t in steps {
        row_steps.extend(std::iter::repeat_n(t, f));
    }
    let sin = g.input(sinusoidal_rows(&row_steps, cfg.step_embed_dim)?);
    let e = dense(g, params, sin, "eps.step_mlp.0")?;
    let e = g.silu(e);
    let emb = dense(g, params, e, "eps.step_mlp.1")?;

    let mut hidden = x;
    for (k, &dilation) in cfg.dilations.iter().enumerate() {
        let w = g.param(params, &format!("eps.block{k}.w"))?;
        let b = g.param(params, &format!("eps.block{k}.b"))?;
        let conv = g.conv1d(hidden, w, Some(b), batch, cfg.kernel, dilation, 1)?;
        hidden = g.leaky_relu(conv, 0.2);
        if k == 0 {
            hidden = g.add(hidden, emb)?;
        }
    }
    dense(g, params, hidden, "eps.head")
}

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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_eps_net;
    use comets_nn::Mode;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg_small() -> EpsNetConfig {
        let mut cfg = EpsNetConfig::new(8, 3);
        cfg.hidden = 6;
        cfg.dilations = vec![1, 2];
        cfg.step_embed_dim = 4;
        cfg
    }

    fn setup(cfg: &EpsNetConfig) -> ParamSet<f64> {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        init_eps_net(&mut params, cfg, &mut rng).unwrap();
        params
    }

    fn run(cfg: &EpsNetConfig, params: &ParamSet<f64>, x: &Array2<f64>, steps: &[usize]) -> Array2<f64> {
        let mut g: Graph<f64> = Graph::new(Mode::Eval);
        let xv = g.input(x.clone());
        let out = eps_forward(&mut g, cfg, params, xv, steps, steps.len()).unwrap();
        g.value(out).clone()
    }

    #[test]
    fn output_shape_equals_input_shape() {
        let cfg = cfg_small();
        let params = setup(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((2 * 8, 3), |_| rng.random::<f64>());
        let y = run(&cfg, &params, &x, &[1, 57]);
        assert_eq!(y.dim(), x.dim());
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn diffusion_step_changes_the_prediction() {
        let cfg = cfg_small();
        let params = setup(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((8, 3), |_| rng.random::<f64>());
        let early = run(&cfg, &params, &x, &[1]);
        let late = run(&cfg, &params, &x, &[90]);
        let diff: f64 = early
            .iter()
            .zip(late.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 1e-6, "step embedding should influence the output");
    }

    #[test]
    fn bad_shapes_and_steps_are_rejected() {
        let cfg = cfg_small();
        let params = setup(&cfg);
        let mut g: Graph<f64> = Graph::new(Mode::Eval);
        let x = g.input(Array2::zeros((8, 3)));
        assert!(eps_forward(&mut g, &cfg, &params, x, &[1, 2], 2).is_err());
        let mut g: Graph<f64> = Graph::new(Mode::Eval);
        let x = g.input(Array2::zeros((8, 3)));
        assert!(eps_forward(&mut g, &cfg, &params, x, &[0], 1).is_err());
    }
}
