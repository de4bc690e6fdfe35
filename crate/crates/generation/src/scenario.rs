//! Counterfactual scenario sweeps with the guided diffusion sampler.
//!
//! One sweep samples the same window population under several guidance
//! weights — typically a negative weight (counterfactual, pushed away from
//! what the critic considers realistic), zero (plain diffusion) and a
//! positive weight — and scores each population with the critic. All
//! weights share one seed, so the populations differ only through the
//! guidance term.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use comets_diffusion::{critic_score, sample_guided, DiffusionModel, GuidanceConfig};
use comets_gan::GanModel;

use crate::error::{GenerationError, Result};

/// Summary of one guidance weight in a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuidanceSweepEntry {
    /// Guidance weight this population was sampled with.
    pub w: f64,
    /// Mean critic score of the sampled windows.
    pub mean_critic_score: f64,
    pub n_windows: usize,
}

/// Sample `count` windows per guidance weight and score each population.
///
/// Returns one summary entry and one window population per weight, in the
/// order given. `base` supplies the critic input mode and time bins; its
/// own weight is ignored.
pub fn guidance_sweep(
    model: &DiffusionModel,
    critic: &GanModel,
    base: &GuidanceConfig,
    weights: &[f64],
    count: usize,
    seed: u64,
) -> Result<(Vec<GuidanceSweepEntry>, Vec<Vec<Array2<f64>>>)> {
    if weights.is_empty() {
        return Err(GenerationError::Config("no guidance weights given".into()));
    }
    if count == 0 {
        return Err(GenerationError::Config(
            "need at least one window per weight".into(),
        ));
    }
    let mut entries = Vec::with_capacity(weights.len());
    let mut populations = Vec::with_capacity(weights.len());
    for &w in weights {
        let guidance = GuidanceConfig { w, ..base.clone() };
        let windows = sample_guided(model, critic, &guidance, count, seed)?;
        let mut total = 0.0;
        for window in &windows {
            total += critic_score(critic, &guidance, window)?;
        }
        entries.push(GuidanceSweepEntry {
            w,
            mean_critic_score: total / windows.len() as f64,
            n_windows: windows.len(),
        });
        populations.push(windows);
    }
    Ok((entries, populations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use comets_core::ChannelKind;
    use comets_diffusion::{sample_unguided, EpsNetConfig, NoiseSchedule};
    use comets_gan::{CriticConfig, GeneratorConfig};

    fn tiny_setup() -> (DiffusionModel, GanModel) {
        let mut cfg = EpsNetConfig::new(8, 2);
        cfg.hidden = 6;
        cfg.dilations = vec![1, 2];
        cfg.step_embed_dim = 4;
        let schedule = NoiseSchedule::linear(1e-4, 2e-2, 20).unwrap();
        let model = DiffusionModel::init(cfg, schedule, 5).unwrap();
        let mut cc = CriticConfig::with_windows(6, 8, 2);
        cc.conv_channels = vec![4, 8];
        cc.linear = vec![8, 4, 1];
        cc.time_embed_dim = 4;
        let gc = GeneratorConfig::with_windows(6, 8, 2, vec![ChannelKind::Raw; 2]);
        let critic = GanModel::init(gc, cc, 17).unwrap();
        (model, critic)
    }

    #[test]
    fn sweep_covers_every_weight_and_embeds_the_unguided_population() {
        let (model, critic) = tiny_setup();
        let weights = [-2.0, 0.0, 2.0];
        let (entries, populations) =
            guidance_sweep(&model, &critic, &GuidanceConfig::new(0.0), &weights, 4, 9).unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(populations.len(), 3);
        for (e, w) in entries.iter().zip(weights) {
            assert_eq!(e.w, w);
            assert_eq!(e.n_windows, 4);
            assert!(e.mean_critic_score.is_finite());
        }
        let unguided = sample_unguided(&model, 4, 9).unwrap();
        for (a, b) in populations[1].iter().zip(&unguided) {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        // Nonzero weights actually moved the samples.
        assert!(populations[0]
            .iter()
            .zip(&unguided)
            .any(|(a, b)| a.iter().zip(b.iter()).any(|(x, y)| x != y)));
    }

    #[test]
    fn empty_sweeps_are_rejected() {
        let (model, critic) = tiny_setup();
        let base = GuidanceConfig::new(0.0);
        assert!(guidance_sweep(&model, &critic, &base, &[], 4, 0).is_err());
        assert!(guidance_sweep(&model, &critic, &base, &[1.0], 0, 0).is_err());
    }
}
