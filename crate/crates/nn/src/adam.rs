//! Adam optimizer with bias correction and 64-bit moment accumulators.

use indexmap::IndexMap;
use ndarray::Array2;

use crate::error::{NnError, Result};
use crate::params::{GradientMap, ParamSet};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: first/second moment estimates per parameter plus the
/// global step counter, all in `f64`.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: IndexMap<String, Array2<f64>>,
    v: IndexMap<String, Array2<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: IndexMap::new(),
            v: IndexMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update to every trainable parameter whose name starts with
    /// `prefix` and has an entry in `grads`. An empty prefix matches all.
    pub fn step<S: Scalar>(
        &mut self,
        params: &mut ParamSet<S>,
        grads: &GradientMap,
        prefix: &str,
    ) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c = &self.config;
        let names: Vec<String> = params
            .iter()
            .filter(|(name, p)| p.trainable && name.starts_with(prefix))
            .map(|(name, _)| name.to_string())
            .collect();
        for name in names {
            let Some(grad) = grads.get(&name) else {
                continue;
            };
            if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
                return Err(NnError::NonFinite(format!(
                    "gradient of `{name}` ({bad})"
                )));
            }
            let param = params.get_mut(&name)?;
            if param.values.dim() != grad.dim() {
                return Err(NnError::Shape {
                    op: format!("adam update of `{name}`"),
                    expected: format!("{:?}", param.values.dim()),
                    actual: format!("{:?}", grad.dim()),
                });
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(grad.dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(grad.dim()));
            let bc1 = 1.0 - c.beta1.powi(t);
            let bc2 = 1.0 - c.beta2.powi(t);
            for ((w, g), (mi, vi)) in param
                .values
                .iter_mut()
                .zip(grad.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * g;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                let next = w.as_f64() - c.lr * m_hat / (v_hat.sqrt() + c.eps);
                if !next.is_finite() {
                    return Err(NnError::NonFinite(format!("updated value of `{name}`")));
                }
                *w = S::from_f64(next);
            }
        }
        Ok(())
    }

    /// Export moments for checkpointing: `(step, [(name, m, v)])`.
    pub fn export(&self) -> (u64, Vec<(String, Array2<f64>, Array2<f64>)>) {
        let entries = self
            .m
            .iter()
            .map(|(k, m)| (k.clone(), m.clone(), self.v[k].clone()))
            .collect();
        (self.step, entries)
    }

    /// Restore moments from a checkpoint.
    pub fn restore(
        config: AdamConfig,
        step: u64,
        entries: Vec<(String, Array2<f64>, Array2<f64>)>,
    ) -> Self {
        let mut m = IndexMap::new();
        let mut v = IndexMap::new();
        for (name, mi, vi) in entries {
            m.insert(name.clone(), mi);
            v.insert(name, vi);
        }
        Self { config, step, m, v }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn one_param() -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("w", array![[1.0]], true).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = one_param();
        let mut grads = GradientMap::new();
        grads.accumulate("w", &array![[0.0]]);
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut params, &grads, "").unwrap();
        assert_eq!(params.get("w").unwrap().values[[0, 0]], 1.0);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // Hand-computed: m=0.1, v=0.001; m_hat=1, v_hat=1;
        // delta = lr * 1 / (1 + eps) which is approximately lr.
        let mut params = one_param();
        let mut grads = GradientMap::new();
        grads.accumulate("w", &array![[1.0]]);
        let mut opt = Adam::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        opt.step(&mut params, &grads, "").unwrap();
        let w = params.get("w").unwrap().values[[0, 0]];
        assert_relative_eq!(w, 1.0 - 0.1 / (1.0 + 1e-8), max_relative = 1e-12);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut params = one_param();
        let mut grads = GradientMap::new();
        grads.accumulate("w", &array![[f64::NAN]]);
        let mut opt = Adam::new(AdamConfig::default());
        let err = opt.step(&mut params, &grads, "").unwrap_err();
        assert!(err.to_string().contains("w"), "{err}");
    }

    #[test]
    fn prefix_filter_skips_other_parameters() {
        let mut params: ParamSet<f64> = ParamSet::new();
        params.insert("gen.w", array![[1.0]], true).unwrap();
        params.insert("critic.w", array![[1.0]], true).unwrap();
        let mut grads = GradientMap::new();
        grads.accumulate("gen.w", &array![[1.0]]);
        grads.accumulate("critic.w", &array![[1.0]]);
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut params, &grads, "gen.").unwrap();
        assert_ne!(params.get("gen.w").unwrap().values[[0, 0]], 1.0);
        assert_eq!(params.get("critic.w").unwrap().values[[0, 0]], 1.0);
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut params = one_param();
            let mut opt = Adam::new(AdamConfig::default());
            for i in 0..25 {
                let mut grads = GradientMap::new();
                grads.accumulate("w", &array![[(i as f64 * 0.37).sin()]]);
                opt.step(&mut params, &grads, "").unwrap();
            }
            params.get("w").unwrap().values[[0, 0]].to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn export_restore_roundtrip_continues_identically() {
        let mut params = one_param();
        let mut opt = Adam::new(AdamConfig::default());
        let grad = |i: u64| {
            let mut g = GradientMap::new();
            g.accumulate("w", &array![[(i as f64 * 0.11).cos()]]);
            g
        };
        for i in 0..10 {
            opt.step(&mut params, &grad(i), "").unwrap();
        }
        let (step, entries) = opt.export();
        let mut params2 = params.clone();
        let mut restored = Adam::restore(AdamConfig::default(), step, entries);
        opt.step(&mut params, &grad(10), "").unwrap();
        restored.step(&mut params2, &grad(10), "").unwrap();
        assert_eq!(
            params.get("w").unwrap().values[[0, 0]].to_bits(),
            params2.get("w").unwrap().values[[0, 0]].to_bits()
        );
    }
}
