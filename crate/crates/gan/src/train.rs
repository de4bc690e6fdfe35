//! Alternating WGAN training with held-out correlation tracking.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use comets_core::rng::substream;
use comets_core::SegmentPair;
use comets_eval::pearson;
use comets_nn::{Adam, Graph, GradientMap, Mode, ParamSet};

use crate::config::{minute_bins, GanTrainConfig};
use crate::critic::critic_forward;
use crate::error::{GanError, Result};
use crate::generator::{generator_forward, sample_noise};
use crate::loss::wgan_losses;
use crate::model::{adam_config, GanModel};

/// One NDJSON log line of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogEntry {
    /// Generator step, 1-based.
    pub step: usize,
    /// Critic objective `mean(D(fake)) - mean(D(real))` at the last critic
    /// update of this step.
    #[serde(rename = "loss_D")]
    pub loss_d: f64,
    /// Generator objective `-mean(D(fake))`.
    #[serde(rename = "loss_G")]
    pub loss_g: f64,
    /// Mean squared pairwise-correlation error on the held-out windows;
    /// present on evaluation steps only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_ccd: Option<f64>,
    /// Wall-clock milliseconds since the start of training.
    pub wall_ms: u64,
}

/// Split windows into a training head and a held-out tail of the final
/// tenth (at least one window), preserving temporal order.
pub fn held_out_split(pairs: &[SegmentPair]) -> Result<(&[SegmentPair], &[SegmentPair])> {
    if pairs.len() < 2 {
        return Err(GanError::Input(format!(
            "training needs at least 2 windows, got {}",
            pairs.len()
        )));
    }
    let held = (pairs.len() / 10).max(1);
    Ok(pairs.split_at(pairs.len() - held))
}

/// Train both networks in place.
///
/// Every generator step runs `critic_steps` critic updates on fresh batches,
/// then one generator update. The sink receives one [`TrainLogEntry`] per
/// generator step; `mean_ccd` is filled every `eval_every` steps and on the
/// final step. Returns the optimizers so they can be checkpointed.
pub fn train_gan(
    model: &mut GanModel,
    pairs: &[SegmentPair],
    cfg: &GanTrainConfig,
    mut sink: impl FnMut(&TrainLogEntry) -> Result<()>,
) -> Result<(Adam, Adam)> {
    cfg.validate()?;
    check_pairs(model, pairs)?;
    let (train_pairs, held_out) = held_out_split(pairs)?;

    let mut adam_g = Adam::new(adam_config(cfg.lr_g, cfg));
    let mut adam_d = Adam::new(adam_config(cfg.lr_d, cfg));
    let mut batch_rng = substream(cfg.seed, "gan.batch");
    let mut noise_rng = substream(cfg.seed, "gan.noise");
    let mut dropout_rng = substream(cfg.seed, "gan.dropout");
    let mut eval_rng = substream(cfg.seed, "gan.eval");
    let started = Instant::now();

    for step in 1..=cfg.gen_steps {
        let mut loss_d = 0.0;
        for _ in 0..cfg.critic_steps {
            loss_d = critic_step(
                model,
                train_pairs,
                cfg,
                &mut adam_d,
                &mut batch_rng,
                &mut noise_rng,
                &mut dropout_rng,
            )
            .map_err(|e| at_step(step, e))?;
        }
        let loss_g = generator_step(
            model,
            train_pairs,
            cfg,
            &mut adam_g,
            &mut batch_rng,
            &mut noise_rng,
            &mut dropout_rng,
        )
        .map_err(|e| at_step(step, e))?;
        if !loss_d.is_finite() || !loss_g.is_finite() {
            return Err(GanError::Training {
                step,
                message: format!("non-finite losses loss_D={loss_d} loss_G={loss_g}"),
            });
        }
        let mean_ccd = if step % cfg.eval_every == 0 || step == cfg.gen_steps {
            Some(held_out_ccd(model, held_out, &mut eval_rng).map_err(|e| at_step(step, e))?)
        } else {
            None
        };
        sink(&TrainLogEntry {
            step,
            loss_d,
            loss_g,
            mean_ccd,
            wall_ms: started.elapsed().as_millis() as u64,
        })?;
    }
    Ok((adam_g, adam_d))
}

fn at_step(step: usize, e: GanError) -> GanError {
    match e {
        e @ GanError::Training { .. } => e,
        other => GanError::Training {
            step,
            message: other.to_string(),
        },
    }
}

fn check_pairs(model: &GanModel, pairs: &[SegmentPair]) -> Result<()> {
    let (p, f, c) = (
        model.generator.past_len,
        model.generator.future_len,
        model.generator.channels,
    );
    for (i, pair) in pairs.iter().enumerate() {
        if pair.past.dim() != (p, c) || pair.future.dim() != (f, c) {
            return Err(GanError::Input(format!(
                "window {i} has past {:?} / future {:?}, model expects ({p}, {c}) / ({f}, {c})",
                pair.past.dim(),
                pair.future.dim()
            )));
        }
        if pair.minute_of_day.len() != p + f {
            return Err(GanError::Input(format!(
                "window {i} carries {} minute stamps, expected {}",
                pair.minute_of_day.len(),
                p + f
            )));
        }
    }
    Ok(())
}

/// Gather a batch of windows into the stacked layouts the networks expect.
struct Batch {
    past: Array2<f32>,
    future: Array2<f32>,
    /// One bin per row of the concatenated `[past; future]` window.
    bins_full: Vec<usize>,
    /// One bin per row of the past window.
    bins_past: Vec<usize>,
}

fn gather(pairs: &[SegmentPair], idx: &[usize]) -> Batch {
    let p = pairs[idx[0]].past.nrows();
    let f = pairs[idx[0]].future.nrows();
    let c = pairs[idx[0]].past.ncols();
    let mut past = Array2::zeros((idx.len() * p, c));
    let mut future = Array2::zeros((idx.len() * f, c));
    let mut bins_full = Vec::with_capacity(idx.len() * (p + f));
    let mut bins_past = Vec::with_capacity(idx.len() * p);
    for (s, &i) in idx.iter().enumerate() {
        let pair = &pairs[i];
        for r in 0..p {
            for k in 0..c {
                past[[s * p + r, k]] = pair.past[[r, k]] as f32;
            }
        }
        for r in 0..f {
            for k in 0..c {
                future[[s * f + r, k]] = pair.future[[r, k]] as f32;
            }
        }
        let bins = minute_bins(&pair.minute_of_day);
        bins_past.extend_from_slice(&bins[..p]);
        bins_full.extend_from_slice(&bins);
    }
    Batch {
        past,
        future,
        bins_full,
        bins_past,
    }
}

fn draw_batch(pairs: &[SegmentPair], batch: usize, rng: &mut impl Rng) -> Batch {
    let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..pairs.len())).collect();
    gather(pairs, &idx)
}

fn apply_u_updates(params: &mut ParamSet<f32>, g: &mut Graph<f32>) -> Result<()> {
    for (name, u) in g.take_u_updates() {
        params.get_mut(&name)?.values = u;
    }
    Ok(())
}

/// Detached generator samples for a critic update.
fn detached_fakes(
    model: &GanModel,
    batch: &Batch,
    noise_rng: &mut impl Rng,
    dropout_rng: &mut impl Rng,
) -> Result<Array2<f32>> {
    let b = batch.bins_past.len() / model.generator.past_len;
    let mut g: Graph<f32> = Graph::new(Mode::Train);
    let past = g.input(batch.past.clone());
    let noise = g.input(sample_noise(&model.generator, b, noise_rng));
    let fake = generator_forward(
        &mut g,
        &model.generator,
        &model.params,
        past,
        noise,
        &batch.bins_past,
        b,
        dropout_rng,
    )?;
    Ok(g.value(fake).clone())
}

fn critic_step(
    model: &mut GanModel,
    pairs: &[SegmentPair],
    cfg: &GanTrainConfig,
    adam_d: &mut Adam,
    batch_rng: &mut impl Rng,
    noise_rng: &mut impl Rng,
    dropout_rng: &mut impl Rng,
) -> Result<f64> {
    let batch = draw_batch(pairs, cfg.batch_size, batch_rng);
    let fake_future = detached_fakes(model, &batch, noise_rng, dropout_rng)?;
    let b = cfg.batch_size;

    let mut g: Graph<f32> = Graph::new(Mode::Train);
    let past = g.input(batch.past.clone());
    let real_future = g.input(batch.future.clone());
    let fake_future = g.input(fake_future);
    let real_full = g.concat_rows(past, real_future, b)?;
    let fake_full = g.concat_rows(past, fake_future, b)?;
    let o_real = critic_forward(&mut g, &model.critic, &model.params, real_full, &batch.bins_full, b)?;
    let o_fake = critic_forward(&mut g, &model.critic, &model.params, fake_full, &batch.bins_full, b)?;
    let (loss_d, _) = wgan_losses(g.value(o_real.o), g.value(o_fake.o))?;

    let mean_fake = g.mean_all(o_fake.o);
    let mean_real = g.mean_all(o_real.o);
    let loss = g.sub(mean_fake, mean_real)?;
    let grads = g.backward(loss)?;
    check_grads(&grads)?;
    adam_d.step(&mut model.params, &grads, "critic.")?;
    apply_u_updates(&mut model.params, &mut g)?;
    Ok(loss_d)
}

fn generator_step(
    model: &mut GanModel,
    pairs: &[SegmentPair],
    cfg: &GanTrainConfig,
    adam_g: &mut Adam,
    batch_rng: &mut impl Rng,
    noise_rng: &mut impl Rng,
    dropout_rng: &mut impl Rng,
) -> Result<f64> {
    let batch = draw_batch(pairs, cfg.batch_size, batch_rng);
    let b = cfg.batch_size;

    let mut g: Graph<f32> = Graph::new(Mode::Train);
    let past = g.input(batch.past.clone());
    let noise = g.input(sample_noise(&model.generator, b, noise_rng));
    let fake = generator_forward(
        &mut g,
        &model.generator,
        &model.params,
        past,
        noise,
        &batch.bins_past,
        b,
        dropout_rng,
    )?;
    let full = g.concat_rows(past, fake, b)?;
    let o_fake = critic_forward(&mut g, &model.critic, &model.params, full, &batch.bins_full, b)?;
    let loss_g = -mean_of(g.value(o_fake.o));

    let mean_fake = g.mean_all(o_fake.o);
    let loss = g.scale(mean_fake, -1.0);
    let grads = g.backward(loss)?;
    check_grads(&grads)?;
    adam_g.step(&mut model.params, &grads, "gen.")?;
    apply_u_updates(&mut model.params, &mut g)?;
    Ok(loss_g)
}

fn mean_of(scores: &Array2<f32>) -> f64 {
    scores.iter().map(|v| *v as f64).sum::<f64>() / scores.nrows() as f64
}

fn check_grads(grads: &GradientMap) -> Result<()> {
    for (name, g) in grads.iter() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(GanError::Input(format!(
                "non-finite gradient for parameter {name}"
            )));
        }
    }
    Ok(())
}

/// Mean over held-out windows and channel pairs of the squared difference
/// between real and generated future correlations.
pub fn held_out_ccd(
    model: &GanModel,
    held_out: &[SegmentPair],
    eval_rng: &mut impl Rng,
) -> Result<f64> {
    let b = held_out.len();
    let c = model.generator.channels;
    let idx: Vec<usize> = (0..b).collect();
    let batch = gather(held_out, &idx);
    let noise = sample_noise::<f32>(&model.generator, b, eval_rng);
    let fake = crate::generator::generate(
        &model.generator,
        &model.params,
        &batch.past,
        &noise,
        &batch.bins_past,
        b,
    )?;
    let f = model.generator.future_len;
    let mut total = 0.0;
    let mut count = 0usize;
    for s in 0..b {
        let real = &held_out[s].future;
        for i in 0..c {
            for j in i + 1..c {
                let (mut ri, mut rj, mut fi, mut fj) =
                    (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                for r in 0..f {
                    ri.push(real[[r, i]]);
                    rj.push(real[[r, j]]);
                    fi.push(fake[[s * f + r, i]] as f64);
                    fj.push(fake[[s * f + r, j]] as f64);
                }
                let rho_real = pearson(&ri, &rj)?;
                let rho_fake = pearson(&fi, &fj)?;
                total += (rho_real - rho_fake).powi(2);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(GanError::Input(
            "correlation tracking needs at least 2 channels".into(),
        ));
    }
    let ccd = total / count as f64;
    if !ccd.is_finite() {
        return Err(GanError::Input("non-finite held-out correlation error".into()));
    }
    Ok(ccd)
}
