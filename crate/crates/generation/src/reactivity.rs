//! Shock-propagation experiments on paired rollouts.
//!
//! For every intensity and seed the experiment runs a perturbed rollout and
//! its unperturbed twin (same noise stream), then reports how strongly the
//! shocked target channel co-moves with the other channels in four
//! configurations: real against real, synthetic against synthetic, shocked
//! target against the twin's (oblivious) channel, and shocked target
//! against the reactive channel that conditioned on the shock. A model that
//! propagates shocks keeps the reactive curve above the oblivious one.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use comets_core::series::MultivariateSeries;
use comets_eval::pearson;
use comets_gan::GanModel;

use crate::error::{GenerationError, Result};
use crate::perturb::PerturbationSpec;
use crate::rollout::{rollout, rollout_perturbed, RolloutConfig};

/// Which pairing a [`ReactivityEntry`] measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    /// Target and other channel of the real reference series.
    RealReal,
    /// Target and other channel of the unperturbed rollout.
    SynthSynth,
    /// Shocked target against the unperturbed twin's other channel.
    PerturbedUnperturbed,
    /// Shocked target against the other channel of the same (reactive) run.
    PerturbedReactive,
}

/// Mean correlation of one (pair, curve, intensity) cell across seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReactivityEntry {
    /// Shocked channel index.
    pub target: usize,
    /// Partner channel index.
    pub other: usize,
    pub curve: CurveKind,
    pub intensity: f64,
    pub mean_corr: f64,
    /// Standard error of the mean across seeds (0 for a single seed).
    pub stderr: f64,
    pub n_seeds: usize,
}

/// The full experiment grid; serializes as a flat JSON array of entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReactivityReport {
    pub entries: Vec<ReactivityEntry>,
}

impl ReactivityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The entry for one cell of the grid, if present.
    pub fn entry(
        &self,
        target: usize,
        other: usize,
        curve: CurveKind,
        intensity: f64,
    ) -> Option<&ReactivityEntry> {
        self.entries.iter().find(|e| {
            e.target == target && e.other == other && e.curve == curve && e.intensity == intensity
        })
    }
}

/// Run the perturbation experiment over an intensity and seed grid.
///
/// `real` is the reference series for the RealReal curve and must cover the
/// rollout extent; correlations are measured from the start of the shock to
/// the end of the rollout, on cumulated values (a price-like view in which
/// a persistent shock shows up as decorrelation rather than vanishing into
/// Pearson's shift invariance).
pub fn reactivity_experiment(
    model: &GanModel,
    base: &RolloutConfig,
    spec: &PerturbationSpec,
    real: &MultivariateSeries,
    intensities: &[f64],
    seeds: &[u64],
) -> Result<ReactivityReport> {
    base.validate()?;
    spec.validate()?;
    if intensities.is_empty() || seeds.is_empty() {
        return Err(GenerationError::Config(
            "need at least one intensity and one seed".into(),
        ));
    }
    if let Some(bad) = intensities.iter().find(|a| !a.is_finite()) {
        return Err(GenerationError::Config(format!(
            "intensity {bad} is not finite"
        )));
    }
    let c = model.generator.channels;
    if real.channels() != c {
        return Err(GenerationError::Input(format!(
            "real series has {} channels, model has {c}",
            real.channels()
        )));
    }
    if real.t_len() < base.total_steps {
        return Err(GenerationError::Input(format!(
            "real series has {} rows, rollout needs {}",
            real.t_len(),
            base.total_steps
        )));
    }
    let pairs: Vec<(usize, usize)> = spec
        .channels
        .iter()
        .flat_map(|&t| {
            (0..c)
                .filter(move |o| !spec.channels.contains(o))
                .map(move |o| (t, o))
        })
        .collect();
    if pairs.is_empty() {
        return Err(GenerationError::Config(
            "perturbation targets every channel; no partner left to observe".into(),
        ));
    }
    let window = spec.t_start..base.total_steps;

    // The unperturbed twin depends only on the seed; reuse it across
    // intensities.
    let mut unperturbed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        unperturbed.push(rollout(model, &cfg)?.series);
    }

    let mut entries = Vec::new();
    for &intensity in intensities {
        let shock = PerturbationSpec {
            intensity,
            ..spec.clone()
        };
        let mut perturbed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.seed = seed;
            perturbed.push(rollout_perturbed(model, &cfg, &shock)?.series);
        }
        for &(target, other) in &pairs {
            let real_corr =
                cumulated_corr(real.values(), target, other, window.clone(), real.values())?;
            let curves: [(CurveKind, Vec<f64>); 4] = [
                (CurveKind::RealReal, vec![real_corr; seeds.len()]),
                (
                    CurveKind::SynthSynth,
                    per_seed(&unperturbed, &unperturbed, target, other, &window)?,
                ),
                (
                    CurveKind::PerturbedUnperturbed,
                    per_seed(&perturbed, &unperturbed, target, other, &window)?,
                ),
                (
                    CurveKind::PerturbedReactive,
                    per_seed(&perturbed, &perturbed, target, other, &window)?,
                ),
            ];
            for (curve, values) in curves {
                let (mean_corr, stderr) = mean_and_stderr(&values);
                entries.push(ReactivityEntry {
                    target,
                    other,
                    curve,
                    intensity,
                    mean_corr,
                    stderr,
                    n_seeds: seeds.len(),
                });
            }
        }
    }
    Ok(ReactivityReport { entries })
}

fn per_seed(
    target_runs: &[MultivariateSeries],
    other_runs: &[MultivariateSeries],
    target: usize,
    other: usize,
    window: &std::ops::Range<usize>,
) -> Result<Vec<f64>> {
    target_runs
        .iter()
        .zip(other_runs)
        .map(|(tr, or)| cumulated_corr(tr.values(), target, other, window.clone(), or.values()))
        .collect()
}

/// Pearson correlation of the cumulative sums of two channels over a row
/// range, with the target column read from `target_values` and the partner
/// from `other_values`.
fn cumulated_corr(
    target_values: &Array2<f64>,
    target: usize,
    other: usize,
    window: std::ops::Range<usize>,
    other_values: &Array2<f64>,
) -> Result<f64> {
    let cum = |values: &Array2<f64>, ch: usize| -> Vec<f64> {
        values
            .column(ch)
            .iter()
            .skip(window.start)
            .take(window.len())
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect()
    };
    Ok(pearson(&cum(target_values, target), &cum(other_values, other))?)
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use comets_core::series::ChannelMeta;
    use comets_core::ChannelKind;
    use comets_gan::{CriticConfig, GeneratorConfig};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_model(seed: u64) -> GanModel {
        let mut gen = GeneratorConfig::with_windows(6, 9, 2, vec![ChannelKind::Raw; 2]);
        gen.hidden = 6;
        gen.time_embed_dim = 4;
        gen.dropout = 0.0;
        let mut critic = CriticConfig::with_windows(6, 9, 2);
        critic.conv_channels = vec![4, 8];
        critic.linear = vec![8, 4, 1];
        critic.time_embed_dim = 4;
        GanModel::init(gen, critic, seed).unwrap()
    }

    fn real_series(rows: usize, seed: u64) -> MultivariateSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = Array2::from_shape_fn((rows, 2), |_| rng.random::<f64>() * 2.0 - 1.0);
        MultivariateSeries::new(values, None, ChannelMeta::raw_channels(2)).unwrap()
    }

    fn base_config(seed: u64) -> RolloutConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RolloutConfig::new(
            36,
            0,
            Array2::from_shape_fn((6, 2), |_| rng.random::<f64>() * 2.0 - 1.0),
        )
    }

    #[test]
    fn zero_intensity_collapses_the_synthetic_curves() {
        let model = tiny_model(1);
        let spec = PerturbationSpec::new(vec![0], 18, 27, 0.0);
        let report = reactivity_experiment(
            &model,
            &base_config(2),
            &spec,
            &real_series(36, 3),
            &[0.0],
            &[5, 6],
        )
        .unwrap();
        let synth = report.entry(0, 1, CurveKind::SynthSynth, 0.0).unwrap();
        let oblivious = report
            .entry(0, 1, CurveKind::PerturbedUnperturbed, 0.0)
            .unwrap();
        let reactive = report
            .entry(0, 1, CurveKind::PerturbedReactive, 0.0)
            .unwrap();
        assert_eq!(synth.mean_corr.to_bits(), oblivious.mean_corr.to_bits());
        assert_eq!(synth.mean_corr.to_bits(), reactive.mean_corr.to_bits());
    }

    #[test]
    fn report_covers_the_full_grid_with_finite_statistics() {
        let model = tiny_model(2);
        let spec = PerturbationSpec::new(vec![0], 9, 18, 1.0);
        let intensities = [0.5, 2.0];
        let seeds = [1, 2, 3];
        let report = reactivity_experiment(
            &model,
            &base_config(4),
            &spec,
            &real_series(36, 5),
            &intensities,
            &seeds,
        )
        .unwrap();
        // 1 pair x 4 curves x 2 intensities.
        assert_eq!(report.entries.len(), 8);
        for e in &report.entries {
            assert!(e.mean_corr.is_finite() && e.stderr.is_finite());
            assert!((-1.0..=1.0).contains(&e.mean_corr), "corr {}", e.mean_corr);
            assert_eq!(e.n_seeds, 3);
            assert!(e.stderr >= 0.0);
        }
        // RealReal ignores the seed grid entirely.
        let rr = report.entry(0, 1, CurveKind::RealReal, 0.5).unwrap();
        assert_eq!(rr.stderr, 0.0);
        let rr2 = report.entry(0, 1, CurveKind::RealReal, 2.0).unwrap();
        assert_eq!(rr.mean_corr.to_bits(), rr2.mean_corr.to_bits());
    }

    #[test]
    fn report_round_trips_through_json() {
        let report = ReactivityReport {
            entries: vec![ReactivityEntry {
                target: 0,
                other: 1,
                curve: CurveKind::PerturbedReactive,
                intensity: 2.0,
                mean_corr: 0.25,
                stderr: 0.0125,
                n_seeds: 10,
            }],
        };
        let json = report.to_json().unwrap();
        assert!(json.trim_start().starts_with('['), "not a flat array: {json}");
        assert!(json.contains("perturbed_reactive"));
        let back: ReactivityReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.entries.len(), 1);
        assert_eq!(back.entries[0].mean_corr, 0.25);
    }

    #[test]
    fn degenerate_grids_are_rejected() {
        let model = tiny_model(3);
        let spec = PerturbationSpec::new(vec![0], 9, 18, 1.0);
        let real = real_series(36, 6);
        let cfg = base_config(7);
        assert!(reactivity_experiment(&model, &cfg, &spec, &real, &[], &[1]).is_err());
        assert!(reactivity_experiment(&model, &cfg, &spec, &real, &[1.0], &[]).is_err());
        let short_real = real_series(10, 6);
        assert!(reactivity_experiment(&model, &cfg, &spec, &short_real, &[1.0], &[1]).is_err());
        let all_targets = PerturbationSpec::new(vec![0, 1], 9, 18, 1.0);
        assert!(reactivity_experiment(&model, &cfg, &all_targets, &real, &[1.0], &[1]).is_err());
    }
}
