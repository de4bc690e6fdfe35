//! Sliding-window segmentation into (past, future) training pairs.

use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::series::MultivariateSeries;

/// One conditioning window and the window that follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPair {
    /// The `P` rows ending just before the split point.
    pub past: Array2<f64>,
    /// The `F` rows starting at the split point.
    pub future: Array2<f64>,
    /// Split index `t` into the source series: past covers rows
    /// `[t - P, t)`, future covers `[t, t + F)`.
    pub t_origin: usize,
    /// Minutes since market open for the `P + F` covered rows.
    pub minute_of_day: Vec<u32>,
}

/// Cut a series into every (past, future) pair.
///
/// Produces one pair per split index `t ∈ [P, T - F]`, so `T - F - P + 1`
/// pairs in total.
pub fn segment(series: &MultivariateSeries, p: usize, f: usize) -> Result<Vec<SegmentPair>> {
    if p < 1 {
        return Err(CoreError::Segment("past length P must be >= 1".into()));
    }
    if f < 2 {
        return Err(CoreError::Segment(
            "future length F must be >= 2 (correlation over the future needs at least 2 rows)"
                .into(),
        ));
    }
    let t_len = series.t_len();
    if t_len < p + f {
        return Err(CoreError::Segment(format!(
            "series length {t_len} is shorter than P + F = {}",
            p + f
        )));
    }
    let minutes = series.minute_of_day()?;
    let values = series.values();
    let mut pairs = Vec::with_capacity(t_len - f - p + 1);
    for t in p..=t_len - f {
        pairs.push(SegmentPair {
            past: values.slice(ndarray::s![t - p..t, ..]).to_owned(),
            future: values.slice(ndarray::s![t..t + f, ..]).to_owned(),
            t_origin: t,
            minute_of_day: minutes[t - p..t + f].to_vec(),
        });
    }
    Ok(pairs)
}
