//! Additive volatility-scaled shocks to generated windows.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{GenerationError, Result};

/// A shock to inject during a rollout: the target channels of every
/// generated row in `[t_start, t_end)` are shifted by `intensity` times the
/// channel's standard deviation over the perturbed rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// Channel indices to shock.
    pub channels: Vec<usize>,
    /// First perturbed step, in generated (rollout) coordinates.
    pub t_start: usize,
    /// One past the last perturbed step.
    pub t_end: usize,
    /// Shock size in per-channel standard deviations; may be negative.
    pub intensity: f64,
}

impl PerturbationSpec {
    pub fn new(channels: Vec<usize>, t_start: usize, t_end: usize, intensity: f64) -> Self {
        Self {
            channels,
            t_start,
            t_end,
            intensity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(GenerationError::Config(
                "perturbation needs at least one target channel".into(),
            ));
        }
        for (i, ch) in self.channels.iter().enumerate() {
            if self.channels[..i].contains(ch) {
                return Err(GenerationError::Config(format!(
                    "duplicate target channel {ch}"
                )));
            }
        }
        if self.t_start >= self.t_end {
            return Err(GenerationError::Config(format!(
                "empty perturbation window [{}, {})",
                self.t_start, self.t_end
            )));
        }
        if !self.intensity.is_finite() {
            return Err(GenerationError::Config(format!(
                "perturbation intensity must be finite, got {}",
                self.intensity
            )));
        }
        Ok(())
    }
}

/// Shift the spec's target channels of `window` by `intensity` standard
/// deviations.
///
/// The deviation is the population standard deviation of the channel over
/// the given rows, so a constant channel is returned unchanged for any
/// intensity, as is any channel at intensity zero. Rows outside the spec's
/// `[t_start, t_end)` are the caller's concern: this function perturbs
/// every row it is handed.
pub fn apply_perturbation(window: &Array2<f64>, spec: &PerturbationSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    if window.nrows() == 0 {
        return Err(GenerationError::Input("empty perturbation window".into()));
    }
    for &ch in &spec.channels {
        if ch >= window.ncols() {
            return Err(GenerationError::Input(format!(
                "target channel {ch} out of range for {} channels",
                window.ncols()
            )));
        }
    }
    let mut out = window.clone();
    for &ch in &spec.channels {
        let col = window.column(ch);
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let shift = spec.intensity * var.sqrt();
        for v in out.column_mut(ch).iter_mut() {
            *v += shift;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn spec(channels: Vec<usize>, intensity: f64) -> PerturbationSpec {
        PerturbationSpec::new(channels, 0, 1, intensity)
    }

    #[test]
    fn zero_intensity_is_identity() {
        let w = array![[1.0, 4.0], [2.0, 5.0], [3.0, 6.0]];
        let out = apply_perturbation(&w, &spec(vec![0, 1], 0.0)).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn constant_channel_is_unchanged_for_any_intensity() {
        let w = array![[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]];
        let out = apply_perturbation(&w, &spec(vec![0], 100.0)).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn unit_intensity_adds_population_sigma() {
        // For [1, 2, 3]: population sigma = sqrt(2/3).
        let w = array![[1.0], [2.0], [3.0]];
        let out = apply_perturbation(&w, &spec(vec![0], 1.0)).unwrap();
        let sigma = 0.816_496_580_927_726;
        for (r, want) in [(0, 1.0 + sigma), (1, 2.0 + sigma), (2, 3.0 + sigma)] {
            assert_relative_eq!(out[[r, 0]], want, max_relative = 1e-12);
        }
    }

    #[test]
    fn untargeted_channels_are_bitwise_untouched() {
        let w = array![[1.0, -7.5, 0.25], [2.0, 3.25, -0.5], [4.0, 0.125, 0.75]];
        let out = apply_perturbation(&w, &spec(vec![1], 2.5)).unwrap();
        for r in 0..3 {
            for c in [0usize, 2] {
                assert_eq!(out[[r, c]].to_bits(), w[[r, c]].to_bits());
            }
            assert_ne!(out[[r, 1]], w[[r, 1]]);
        }
    }

    #[test]
    fn negative_intensity_shifts_down() {
        let w = array![[1.0], [3.0]];
        let out = apply_perturbation(&w, &spec(vec![0], -1.0)).unwrap();
        // Population sigma of [1, 3] is 1.
        assert_relative_eq!(out[[0, 0]], 0.0, epsilon = 1e-12);
        assert_relative_eq!(out[[1, 0]], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_specs_and_windows_are_rejected() {
        let w = array![[1.0], [2.0]];
        assert!(apply_perturbation(&w, &spec(vec![], 1.0)).is_err());
        assert!(apply_perturbation(&w, &spec(vec![0, 0], 1.0)).is_err());
        assert!(apply_perturbation(&w, &spec(vec![1], 1.0)).is_err());
        assert!(apply_perturbation(&w, &spec(vec![0], f64::NAN)).is_err());
        assert!(apply_perturbation(&Array2::zeros((0, 1)), &spec(vec![0], 1.0)).is_err());
        let mut bad = spec(vec![0], 1.0);
        bad.t_end = bad.t_start;
        assert!(bad.validate().is_err());
    }
}
