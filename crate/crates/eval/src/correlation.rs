//! Pearson correlations, windowed correlation distributions and the
//! squared-difference distance between a real and a synthetic pair
//! correlation.

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

/// Sliding-window layout for windowed correlation distributions.
///
/// The default stride equals the window length, i.e. windows do not overlap
/// and a one-day window yields exactly one correlation per trading day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationWindowSpec {
    pub window: usize,
    pub stride: usize,
}

impl CorrelationWindowSpec {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        if window < 2 {
            return Err(EvalError::InvalidSpec(format!(
                "correlation window must be >= 2, got {window}"
            )));
        }
        if stride < 1 {
            return Err(EvalError::InvalidSpec("stride must be >= 1".into()));
        }
        Ok(Self { window, stride })
    }

    /// Non-overlapping windows of the given length.
    pub fn non_overlapping(window: usize) -> Result<Self> {
        Self::new(window, window)
    }

    /// Non-overlapping windows of one trading day (390 minutes).
    pub fn daily() -> Self {
        Self {
            window: comets_core::SESSION_MINUTES as usize,
            stride: comets_core::SESSION_MINUTES as usize,
        }
    }

    /// Non-overlapping windows of two trading days (780 minutes).
    pub fn two_day() -> Self {
        Self {
            window: 2 * comets_core::SESSION_MINUTES as usize,
            stride: 2 * comets_core::SESSION_MINUTES as usize,
        }
    }

    /// Number of windows over a series of length `t`.
    pub fn count(&self, t: usize) -> usize {
        if t < self.window {
            0
        } else {
            (t - self.window) / self.stride + 1
        }
    }
}

/// Pearson correlation coefficient of two equally long samples.
///
/// Constant input maps to 0 by convention so that flat stretches of a series
/// contribute "no linear relationship" rather than an undefined value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::Insufficient(
            "pearson needs at least 2 samples".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Autocorrelation at `lag`: the Pearson correlation between the series and
/// its lagged copy. Requires `lag < x.len() - 1`.
pub fn autocorrelation(x: &[f64], lag: usize) -> Result<f64> {
    if lag + 2 > x.len() {
        return Err(EvalError::Insufficient(format!(
            "autocorrelation at lag {lag} needs at least {} samples, got {}",
            lag + 2,
            x.len()
        )));
    }
    pearson(&x[..x.len() - lag], &x[lag..])
}

/// Squared difference between the real pair correlation and the synthetic
/// pair correlation. Symmetric in the real/synthetic order and bounded by 4.
pub fn cross_correlation_distance(
    real_x: &[f64],
    real_y: &[f64],
    syn_x: &[f64],
    syn_y: &[f64],
) -> Result<f64> {
    let r = pearson(real_x, real_y)?;
    let s = pearson(syn_x, syn_y)?;
    Ok((r - s) * (r - s))
}

/// Pearson correlation of a channel pair over every sliding window.
pub fn windowed_correlations(
    x: &[f64],
    y: &[f64],
    spec: &CorrelationWindowSpec,
) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < spec.window {
        return Err(EvalError::Insufficient(format!(
            "series of length {} is shorter than the {}-step correlation window",
            x.len(),
            spec.window
        )));
    }
    let mut out = Vec::with_capacity(spec.count(x.len()));
    let mut start = 0;
    while start + spec.window <= x.len() {
        out.push(pearson(
            &x[start..start + spec.window],
            &y[start..start + spec.window],
        )?);
        start += spec.stride;
    }
    Ok(out)
}
