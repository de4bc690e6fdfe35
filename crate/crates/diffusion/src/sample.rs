//! Ancestral sampling, optionally steered by a trained critic.
//!
//! The unguided sampler starts from `x_T ~ N(0, I)` and walks the learned
//! reverse transitions down to `x_0`, with the reverse variance fixed to
//! `beta_t` and no noise added on the last step. The guided sampler adjusts
//! the predicted noise at every step by the critic's input gradient,
//!
//! ```text
//! eps_tilde = eps_hat - w * sqrt(1 - alpha_bar_t) * grad_{x_t} D(x_t)
//! ```
//!
//! which follows the critic uphill for positive `w` and downhill
//! (counterfactually) for negative `w`. With `w = 0` the critic is never
//! evaluated and the output is bit-identical to the unguided sampler.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use comets_core::rng::substream_indexed;
use comets_gan::{
    critic_forward, critic_future_gradient, minute_bin, CriticConfig, GanModel, TIME_BINS,
};
use comets_nn::{Graph, Mode};

use crate::error::{DiffusionError, Result};
use crate::eps_net::eps_forward;
use crate::model::DiffusionModel;

/// How a conditional critic consumes an unconditional diffusion window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CriticInputMode {
    /// Feed a zeroed past window and the sample as the future; requires the
    /// critic's future length to equal the diffusion window length.
    #[default]
    ZeroPast,
    /// Feed the sample as the critic's whole input; requires the critic's
    /// past plus future length to equal the diffusion window length.
    Unconditional,
}

/// Settings for critic-guided sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuidanceConfig {
    /// Guidance weight; positive follows the critic, negative opposes it,
    /// zero reproduces the unguided sampler bit for bit.
    pub w: f64,
    /// How the sampled window is presented to the critic.
    pub input_mode: CriticInputMode,
    /// Ten-minute time bins for the critic input, one per critic row.
    /// `None` assigns consecutive minutes from the start of a trading day.
    pub minute_bins: Option<Vec<usize>>,
}

impl GuidanceConfig {
    pub fn new(w: f64) -> Self {
        Self {
            w,
            input_mode: CriticInputMode::default(),
            minute_bins: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.w.is_finite() {
            return Err(DiffusionError::Config(format!(
                "guidance weight must be finite, got {}",
                self.w
            )));
        }
        if let Some(bins) = &self.minute_bins {
            if let Some(bad) = bins.iter().find(|b| **b >= TIME_BINS) {
                return Err(DiffusionError::Config(format!(
                    "minute bin {bad} out of range 0..{TIME_BINS}"
                )));
            }
        }
        Ok(())
    }
}

/// Draw `count` windows of shape `F x C` by ancestral sampling.
///
/// Window `i` uses its own rng stream derived from `(seed, i)`, so any
/// subset of windows can be regenerated independently.
pub fn sample_unguided(model: &DiffusionModel, count: usize, seed: u64) -> Result<Vec<Array2<f64>>> {
    sample_inner(model, None, count, seed)
}

/// Draw `count` windows with the critic steering every reverse step.
pub fn sample_guided(
    model: &DiffusionModel,
    critic: &GanModel,
    guidance: &GuidanceConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<Array2<f64>>> {
    guidance.validate()?;
    check_critic_shapes(model, critic, guidance)?;
    sample_inner(model, Some((critic, guidance)), count, seed)
}

fn sample_inner(
    model: &DiffusionModel,
    guided: Option<(&GanModel, &GuidanceConfig)>,
    count: usize,
    seed: u64,
) -> Result<Vec<Array2<f64>>> {
    model.config.validate()?;
    (0..count)
        .map(|i| {
            let mut rng = substream_indexed(seed, "diffusion.window", i as u64);
            reverse_window(model, guided, &mut rng)
        })
        .collect()
}

fn reverse_window(
    model: &DiffusionModel,
    guided: Option<(&GanModel, &GuidanceConfig)>,
    rng: &mut impl Rng,
) -> Result<Array2<f64>> {
    let (f, c) = (model.config.future_len, model.config.channels);
    let sched = &model.schedule;
    let mut x = Array2::from_shape_fn((f, c), |_| rng.sample::<f64, _>(StandardNormal));
    for t in (1..=sched.t_steps()).rev() {
        let eps = match guided {
            Some((critic, cfg)) if cfg.w != 0.0 => guided_noise(model, critic, cfg, &x, t)?,
            _ => predict_noise(model, &x, t)?,
        };
        let beta = sched.beta(t);
        let coef = beta / (1.0 - sched.alpha_bar(t)).sqrt();
        let alpha_sqrt = sched.alpha(t).sqrt();
        x.zip_mut_with(&eps, |xv, ev| *xv = (*xv - coef * *ev) / alpha_sqrt);
        if t > 1 {
            let sigma = beta.sqrt();
            for v in x.iter_mut() {
                *v += sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(DiffusionError::Sampling {
                step: t,
                message: format!("sample contains a non-finite value {bad}"),
            });
        }
    }
    Ok(x)
}

/// Run the denoiser on one window: the predicted noise at step `t`.
pub fn predict_noise(model: &DiffusionModel, x_t: &Array2<f64>, t: usize) -> Result<Array2<f64>> {
    model.schedule.check_step(t)?;
    let x32 = x_t.mapv(|v| v as f32);
    let mut g: Graph<f32> = Graph::new(Mode::Eval);
    let x = g.input(x32);
    let pred = eps_forward(&mut g, &model.config, &model.params, x, &[t], 1)?;
    Ok(g.value(pred).mapv(f64::from))
}

/// The adjusted noise `eps_hat - w * sqrt(1 - alpha_bar_t) * grad D` used by
/// the guided sampler at step `t`. Exposed so the per-step correction can be
/// inspected without running a whole reverse chain.
pub fn guided_noise(
    model: &DiffusionModel,
    critic: &GanModel,
    guidance: &GuidanceConfig,
    x_t: &Array2<f64>,
    t: usize,
) -> Result<Array2<f64>> {
    let mut eps = predict_noise(model, x_t, t)?;
    if guidance.w != 0.0 {
        let grad = critic_gradient(critic, guidance, x_t)?;
        let scale = guidance.w * (1.0 - model.schedule.alpha_bar(t)).sqrt();
        eps.zip_mut_with(&grad, |ev, gv| *ev -= scale * *gv);
    }
    Ok(eps)
}

/// Gradient of the critic score with respect to the sampled window, in the
/// configured input mode. Shape matches `x_t`.
pub fn critic_gradient(
    critic: &GanModel,
    guidance: &GuidanceConfig,
    x_t: &Array2<f64>,
) -> Result<Array2<f64>> {
    let (bins, x32) = critic_view(critic, guidance, x_t)?;
    let cc = &critic.critic;
    let grad = match guidance.input_mode {
        CriticInputMode::ZeroPast => {
            let past = Array2::<f32>::zeros((cc.past_len, cc.channels));
            critic_future_gradient(cc, &critic.params, &past, &x32, &bins, 1)?
        }
        CriticInputMode::Unconditional => {
            let mut g: Graph<f32> = Graph::new(Mode::Eval);
            let x = g.watched_input(x32);
            let score = critic_forward(&mut g, cc, &critic.params, x, &bins, 1)?;
            let mean = g.mean_all(score.o);
            g.backward(mean)?;
            g.input_grad(x)
                .ok_or_else(|| DiffusionError::Input("critic gradient was not retained".into()))?
                .clone()
        }
    };
    Ok(grad.mapv(f64::from))
}

/// Critic score of one sampled window, presented in the configured input
/// mode — the quantity whose gradient steers guided sampling.
pub fn critic_score(
    critic: &GanModel,
    guidance: &GuidanceConfig,
    window: &Array2<f64>,
) -> Result<f64> {
    let (bins, x32) = critic_view(critic, guidance, window)?;
    let cc = &critic.critic;
    let full = match guidance.input_mode {
        CriticInputMode::ZeroPast => {
            let mut full = Array2::<f32>::zeros((cc.past_len + cc.future_len, cc.channels));
            full.slice_mut(ndarray::s![cc.past_len.., ..]).assign(&x32);
            full
        }
        CriticInputMode::Unconditional => x32,
    };
    let mut g: Graph<f32> = Graph::new(Mode::Eval);
    let x = g.input(full);
    let score = critic_forward(&mut g, cc, &critic.params, x, &bins, 1)?;
    Ok(f64::from(g.value(score.o)[[0, 0]]))
}

/// Validate a window against the guidance mode; returns the critic's time
/// bins and the window cast to the critic's precision.
fn critic_view(
    critic: &GanModel,
    guidance: &GuidanceConfig,
    x_t: &Array2<f64>,
) -> Result<(Vec<usize>, Array2<f32>)> {
    guidance.validate()?;
    let cc = &critic.critic;
    let rows = match guidance.input_mode {
        CriticInputMode::ZeroPast => cc.future_len,
        CriticInputMode::Unconditional => cc.past_len + cc.future_len,
    };
    if x_t.dim() != (rows, cc.channels) {
        return Err(DiffusionError::Input(format!(
            "critic expects a ({rows}, {}) window in {:?} mode, got {:?}",
            cc.channels,
            guidance.input_mode,
            x_t.dim()
        )));
    }
    let bins = guidance_bins(cc, guidance)?;
    Ok((bins, x_t.mapv(|v| v as f32)))
}

/// Time bins for the critic input, one per critic row.
fn guidance_bins(cc: &CriticConfig, guidance: &GuidanceConfig) -> Result<Vec<usize>> {
    let rows = cc.past_len + cc.future_len;
    match &guidance.minute_bins {
        Some(bins) => {
            if bins.len() != rows {
                return Err(DiffusionError::Config(format!(
                    "{} minute bins for a critic input of {rows} rows",
                    bins.len()
                )));
            }
            Ok(bins.clone())
        }
        None => Ok((0..rows).map(|r| minute_bin((r % 390) as u32)).collect()),
    }
}

fn check_critic_shapes(
    model: &DiffusionModel,
    critic: &GanModel,
    guidance: &GuidanceConfig,
) -> Result<()> {
    let (f, c) = (model.config.future_len, model.config.channels);
    let cc = &critic.critic;
    if cc.channels != c {
        return Err(DiffusionError::Input(format!(
            "critic has {} channels, diffusion model has {c}",
            cc.channels
        )));
    }
    match guidance.input_mode {
        CriticInputMode::ZeroPast if cc.future_len != f => Err(DiffusionError::Input(format!(
            "ZeroPast guidance needs critic future length {f}, got {}",
            cc.future_len
        ))),
        CriticInputMode::Unconditional if cc.past_len + cc.future_len != f => {
            Err(DiffusionError::Input(format!(
                "Unconditional guidance needs critic past + future length {f}, got {}",
                cc.past_len + cc.future_len
            )))
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EpsNetConfig;
    use crate::schedule::NoiseSchedule;

    fn tiny_model(seed: u64) -> DiffusionModel {
        let mut cfg = EpsNetConfig::new(8, 2);
        cfg.hidden = 6;
        cfg.dilations = vec![1, 2];
        cfg.step_embed_dim = 4;
        let schedule = NoiseSchedule::linear(1e-4, 2e-2, 10).unwrap();
        DiffusionModel::init(cfg, schedule, seed).unwrap()
    }

    #[test]
    fn output_shape_count_and_finiteness() {
        let model = tiny_model(1);
        let out = sample_unguided(&model, 3, 7).unwrap();
        assert_eq!(out.len(), 3);
        for w in &out {
            assert_eq!(w.dim(), (8, 2));
            assert!(w.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn fixed_seed_reproduces_and_windows_are_independent() {
        let model = tiny_model(2);
        let a = sample_unguided(&model, 3, 11).unwrap();
        let b = sample_unguided(&model, 3, 11).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
        // The second window alone equals the second window of the batch.
        let second = {
            let mut rng = substream_indexed(11, "diffusion.window", 1);
            reverse_window(&model, None, &mut rng).unwrap()
        };
        assert!(a[1]
            .iter()
            .zip(second.iter())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
        let other = sample_unguided(&model, 3, 12).unwrap();
        assert!(a[0].iter().zip(other[0].iter()).any(|(p, q)| p != q));
    }

    #[test]
    fn default_bins_walk_the_trading_day() {
        let cc = CriticConfig::with_windows(6, 8, 2);
        let bins = guidance_bins(&cc, &GuidanceConfig::new(1.0)).unwrap();
        assert_eq!(bins.len(), 14);
        assert_eq!(&bins[..14], &[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn score_rises_along_its_own_gradient() {
        let kinds = vec![comets_core::ChannelKind::Raw; 2];
        let critic = comets_gan::GanModel::init(
            comets_gan::GeneratorConfig::with_windows(6, 8, 2, kinds),
            CriticConfig::with_windows(6, 8, 2),
            9,
        )
        .unwrap();
        let gcfg = GuidanceConfig::new(1.0);
        let mut rng = substream_indexed(3, "test.window", 0);
        let x = Array2::from_shape_fn((8, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let s0 = critic_score(&critic, &gcfg, &x).unwrap();
        let grad = critic_gradient(&critic, &gcfg, &x).unwrap();
        let norm2: f64 = grad.iter().map(|g| g * g).sum();
        assert!(norm2 > 0.0);
        let stepped = &x + &grad.mapv(|g| 1e-2 * g);
        let s1 = critic_score(&critic, &gcfg, &stepped).unwrap();
        assert!(s1 > s0, "score did not rise: {s0} -> {s1}");
    }

    #[test]
    fn bad_guidance_configs_are_rejected() {
        let model = tiny_model(3);
        let kinds = vec![comets_core::ChannelKind::Raw; 2];
        let critic = comets_gan::GanModel::init(
            comets_gan::GeneratorConfig::with_windows(6, 8, 2, kinds),
            CriticConfig::with_windows(6, 8, 2),
            4,
        )
        .unwrap();
        let nan = GuidanceConfig::new(f64::NAN);
        assert!(sample_guided(&model, &critic, &nan, 1, 0).is_err());

        let mut wrong_bins = GuidanceConfig::new(1.0);
        wrong_bins.minute_bins = Some(vec![0; 3]);
        assert!(sample_guided(&model, &critic, &wrong_bins, 1, 0).is_err());

        // Unconditional needs past + future == F (6 + 8 != 8).
        let mut uncond = GuidanceConfig::new(1.0);
        uncond.input_mode = CriticInputMode::Unconditional;
        assert!(sample_guided(&model, &critic, &uncond, 1, 0).is_err());

        // Channel mismatch.
        let wide = comets_gan::GanModel::init(
            comets_gan::GeneratorConfig::with_windows(6, 8, 3, vec![comets_core::ChannelKind::Raw; 3]),
            CriticConfig::with_windows(6, 8, 3),
            4,
        )
        .unwrap();
        assert!(sample_guided(&model, &wide, &GuidanceConfig::new(1.0), 1, 0).is_err());
    }
}
