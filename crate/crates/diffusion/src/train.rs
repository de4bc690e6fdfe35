//! Denoising score-matching training loop.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use comets_core::rng::substream;
use comets_nn::{Adam, Graph, Mode};

use crate::error::{DiffusionError, Result};
use crate::eps_net::eps_forward;
use crate::forward::forward_sample;
use crate::model::{adam_config, DiffusionModel, DiffusionTrainConfig};

/// One NDJSON log line of a denoiser training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionLogEntry {
    /// Optimization step, 1-based.
    pub step: usize,
    /// Mean squared noise-prediction error of this batch.
    pub loss: f64,
    /// Wall-clock milliseconds since the start of training.
    pub wall_ms: u64,
}

/// Train the denoiser in place on a set of `F x C` windows.
///
/// Each step draws a batch of windows with replacement, a uniform diffusion
/// step per window, and fresh noise; the loss is the mean squared error
/// between the drawn and the predicted noise. The sink receives one entry
/// every `log_every` steps and on the final step. Returns the optimizer for
/// checkpointing.
pub fn train_diffusion(
    model: &mut DiffusionModel,
    windows: &[Array2<f64>],
    cfg: &DiffusionTrainConfig,
    mut sink: impl FnMut(&DiffusionLogEntry) -> Result<()>,
) -> Result<Adam> {
    cfg.validate()?;
    check_windows(model, windows)?;
    let mut adam = Adam::new(adam_config(cfg));
    let mut batch_rng = substream(cfg.seed, "diffusion.batch");
    let mut step_rng = substream(cfg.seed, "diffusion.step");
    let mut noise_rng = substream(cfg.seed, "diffusion.noise");
    let started = Instant::now();
    let (f, c) = (model.config.future_len, model.config.channels);
    let t_max = model.schedule.t_steps();

    for step in 1..=cfg.steps {
        let b = cfg.batch_size;
        let mut x_t = Array2::<f32>::zeros((b * f, c));
        let mut target = Array2::<f32>::zeros((b * f, c));
        let mut steps = Vec::with_capacity(b);
        for s in 0..b {
            let w = &windows[batch_rng.random_range(0..windows.len())];
            let t = step_rng.random_range(1..=t_max);
            steps.push(t);
            let (noised, eps) = forward_sample::<f64>(w, t, &model.schedule, &mut noise_rng)
                .map_err(|e| at_step(step, e))?;
            for r in 0..f {
                for k in 0..c {
                    x_t[[s * f + r, k]] = noised[[r, k]] as f32;
                    target[[s * f + r, k]] = eps[[r, k]] as f32;
                }
            }
        }

        let mut g: Graph<f32> = Graph::new(Mode::Train);
        let x = g.input(x_t);
        let y = g.input(target);
        let pred = eps_forward(&mut g, &model.config, &model.params, x, &steps, b)
            .map_err(|e| at_step(step, e))?;
        let diff = g.sub(pred, y).map_err(|e| at_step(step, e.into()))?;
        let sq = g.mul(diff, diff).map_err(|e| at_step(step, e.into()))?;
        let loss = g.mean_all(sq);
        let loss_value = g.value(loss)[[0, 0]] as f64;
        if !loss_value.is_finite() {
            return Err(DiffusionError::Training {
                step,
                message: format!("non-finite loss {loss_value}"),
            });
        }
        let grads = g.backward(loss).map_err(|e| at_step(step, e.into()))?;
        adam.step(&mut model.params, &grads, "eps.")
            .map_err(|e| at_step(step, e.into()))?;

        if step % cfg.log_every == 0 || step == cfg.steps {
            sink(&DiffusionLogEntry {
                step,
                loss: loss_value,
                wall_ms: started.elapsed().as_millis() as u64,
            })?;
        }
    }
    Ok(adam)
}

fn at_step(step: usize, e: DiffusionError) -> DiffusionError {
    match e {
        e @ DiffusionError::Training { .. } => e,
        other => DiffusionError::Training {
            step,
            message: other.to_string(),
        },
    }
}

fn check_windows(model: &DiffusionModel, windows: &[Array2<f64>]) -> Result<()> {
    if windows.is_empty() {
        return Err(DiffusionError::Input("no training windows".into()));
    }
    let want = (model.config.future_len, model.config.channels);
    for (i, w) in windows.iter().enumerate() {
        if w.dim() != want {
            return Err(DiffusionError::Input(format!(
                "window {i} has shape {:?}, model expects {want:?}",
                w.dim()
            )));
        }
        if let Some(bad) = w.iter().find(|v| !v.is_finite()) {
            return Err(DiffusionError::Input(format!(
                "window {i} contains a non-finite value {bad}"
            )));
        }
    }
    Ok(())
}
