//! Noise schedule: per-step variances and their running products.

use serde::{Deserialize, Serialize};

use crate::error::{DiffusionError, Result};

/// Default linear schedule bounds and length.
pub const DEFAULT_BETA_MIN: f64 = 1e-4;
pub const DEFAULT_BETA_MAX: f64 = 2e-2;
pub const DEFAULT_T_STEPS: usize = 100;

/// The variances `beta_1..beta_T` of the forward process together with the
/// precomputed products `alpha_bar_t = prod_{s<=t} (1 - beta_s)`;
/// `alpha_bar_0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Schedule from explicit variances; every `beta` must lie in `(0, 1)`.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(DiffusionError::Config(
                "schedule needs at least one step".into(),
            ));
        }
        if let Some(bad) = betas.iter().find(|b| !(0.0..1.0).contains(*b) || **b == 0.0) {
            return Err(DiffusionError::Config(format!(
                "beta values must lie strictly inside (0, 1), got {bad}"
            )));
        }
        Ok(Self::build(betas))
    }

    /// Linear interpolation from `beta_min` to `beta_max` over `t_steps`.
    pub fn linear(beta_min: f64, beta_max: f64, t_steps: usize) -> Result<Self> {
        if t_steps == 0 {
            return Err(DiffusionError::Config(
                "schedule needs at least one step".into(),
            ));
        }
        if beta_min > beta_max {
            return Err(DiffusionError::Config(format!(
                "beta_min {beta_min} exceeds beta_max {beta_max}"
            )));
        }
        let betas = (0..t_steps)
            .map(|i| {
                if t_steps == 1 {
                    beta_min
                } else {
                    beta_min + (beta_max - beta_min) * i as f64 / (t_steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    /// The default schedule: linear from `1e-4` to `0.02` over 100 steps.
    pub fn default_linear() -> Self {
        Self::linear(DEFAULT_BETA_MIN, DEFAULT_BETA_MAX, DEFAULT_T_STEPS)
            .expect("default schedule bounds are valid")
    }

    /// Build without validating the betas. Exists for edge-case tests (such
    /// as an all-zero schedule, under which the forward process is the
    /// identity); production code should use [`NoiseSchedule::from_betas`].
    #[doc(hidden)]
    pub fn unchecked(betas: Vec<f64>) -> Self {
        Self::build(betas)
    }

    fn build(betas: Vec<f64>) -> Self {
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        for (i, b) in betas.iter().enumerate() {
            alpha_bars.push(alpha_bars[i] * (1.0 - b));
        }
        Self { betas, alpha_bars }
    }

    /// Number of diffusion steps `T`.
    pub fn t_steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `alpha_t = 1 - beta_t` for `t` in `1..=T`.
    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    /// `alpha_bar_t` for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// Bounds check for a step index used by the forward process.
    pub fn check_step(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.t_steps() {
            return Err(DiffusionError::Input(format!(
                "step {t} outside 1..={}",
                self.t_steps()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_schedule_has_expected_shape() {
        let s = NoiseSchedule::default_linear();
        assert_eq!(s.t_steps(), 100);
        assert_relative_eq!(s.beta(1), 1e-4, epsilon = 1e-15);
        assert_relative_eq!(s.beta(100), 2e-2, epsilon = 1e-15);
        assert_eq!(s.alpha_bar(0), 1.0);
    }

    #[test]
    fn two_tenth_steps_give_alpha_bar_081() {
        let s = NoiseSchedule::from_betas(vec![0.1, 0.1]).unwrap();
        assert_relative_eq!(s.alpha_bar(2), 0.81, epsilon = 1e-15);
    }

    #[test]
    fn alpha_bar_ratio_recovers_beta_exactly() {
        let s = NoiseSchedule::default_linear();
        for t in 1..=s.t_steps() {
            // The product construction makes this exact in floating point.
            assert_eq!(s.alpha_bar(t), s.alpha_bar(t - 1) * (1.0 - s.beta(t)));
        }
    }

    #[test]
    fn alpha_bars_strictly_decrease() {
        let s = NoiseSchedule::default_linear();
        for t in 1..=s.t_steps() {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
    }

    #[test]
    fn invalid_betas_are_rejected() {
        assert!(NoiseSchedule::from_betas(vec![]).is_err());
        assert!(NoiseSchedule::from_betas(vec![0.0]).is_err());
        assert!(NoiseSchedule::from_betas(vec![1.0]).is_err());
        assert!(NoiseSchedule::from_betas(vec![0.5, -0.1]).is_err());
        assert!(NoiseSchedule::linear(0.2, 0.1, 10).is_err());
    }

    #[test]
    fn unchecked_allows_the_identity_edge_schedule() {
        let s = NoiseSchedule::unchecked(vec![0.0, 0.0]);
        assert_eq!(s.alpha_bar(2), 1.0);
    }

    #[test]
    fn out_of_range_steps_are_rejected() {
        let s = NoiseSchedule::default_linear();
        assert!(s.check_step(0).is_err());
        assert!(s.check_step(101).is_err());
        s.check_step(1).unwrap();
        s.check_step(100).unwrap();
    }

    #[test]
    fn serde_roundtrip_is_exact() {
        let s = NoiseSchedule::default_linear();
        let json = serde_json::to_string(&s).unwrap();
        let back: NoiseSchedule = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
    }
}
