//! Normalization of market series and its exact inverse.
//!
//! Price channels become z-scored log-returns; volume channels are min-max
//! scaled to `[-1, 1]`. The first row of every channel is dropped so that
//! price and volume channels stay aligned at length `T - 1`. The fitted
//! [`PreprocessState`] carries everything needed to invert the transform,
//! either back onto the fitted window or as a continuation beyond its last
//! observed price.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::series::{ChannelKind, MultivariateSeries};

/// Per-channel normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChannelState {
    /// Statistics of a price channel's log-returns plus the anchor prices.
    Price {
        mean: f64,
        std: f64,
        first_price: f64,
        last_price: f64,
    },
    /// Range of a volume channel.
    Volume { min: f64, max: f64 },
}

/// Fitted normalization state, one entry per channel in series order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessState {
    pub channels: Vec<ChannelState>,
}

/// Which raw price starts the cumulative exponentiation in
/// [`invert_preprocess`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceAnchor {
    /// Rebuild the window the state was fitted on (starts from the first raw
    /// price; the roundtrip inverse of [`apply_preprocess`]).
    FittedWindow,
    /// Extend past the fitted window (starts from the last raw price; used
    /// for generated continuations).
    Continuation,
}

/// Estimate normalization statistics from a raw market series.
pub fn fit_preprocess(series: &MultivariateSeries) -> Result<PreprocessState> {
    if series.t_len() < 2 {
        return Err(CoreError::Preprocess("need T >= 2 to fit".into()));
    }
    let mut channels = Vec::with_capacity(series.channels());
    for (c, meta) in series.channel_meta().iter().enumerate() {
        let col = series.column(c);
        match meta.kind {
            ChannelKind::Price => {
                let returns = log_returns(&col);
                let mean = mean(&returns);
                let std = population_std(&returns, mean);
                if std <= 0.0 {
                    return Err(CoreError::Preprocess(format!(
                        "price channel {c} ({}) is constant",
                        meta.ticker
                    )));
                }
                channels.push(ChannelState::Price {
                    mean,
                    std,
                    first_price: col[0],
                    last_price: *col.last().unwrap(),
                });
            }
            ChannelKind::Volume => {
                let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if max <= min {
                    return Err(CoreError::Preprocess(format!(
                        "volume channel {c} ({}) is constant",
                        meta.ticker
                    )));
                }
                channels.push(ChannelState::Volume { min, max });
            }
            ChannelKind::Raw => {
                return Err(CoreError::Preprocess(format!(
                    "channel {c} has kind raw; preprocessing needs price/volume channels"
                )));
            }
        }
    }
    Ok(PreprocessState { channels })
}

/// Normalize a raw series with a fitted state. Output has `T - 1` rows.
pub fn apply_preprocess(
    series: &MultivariateSeries,
    state: &PreprocessState,
) -> Result<MultivariateSeries> {
    check_layout(series, state)?;
    if series.t_len() < 2 {
        return Err(CoreError::Preprocess("need T >= 2 to transform".into()));
    }
    let t_out = series.t_len() - 1;
    let mut values = Array2::zeros((t_out, series.channels()));
    for (c, st) in state.channels.iter().enumerate() {
        let col = series.column(c);
        match st {
            ChannelState::Price { mean, std, .. } => {
                for (r, ret) in log_returns(&col).into_iter().enumerate() {
                    values[[r, c]] = (ret - mean) / std;
                }
            }
            ChannelState::Volume { min, max } => {
                for r in 0..t_out {
                    values[[r, c]] = 2.0 * (col[r + 1] - min) / (max - min) - 1.0;
                }
            }
        }
    }
    let timestamps = series.timestamps().map(|ts| ts[1..].to_vec());
    MultivariateSeries::new(values, timestamps, series.channel_meta().to_vec())
}

/// Map a normalized series back to raw prices and volumes.
///
/// Price channels are rebuilt by cumulative exponentiation of the
/// de-standardized log-returns from the anchor price. Volumes are mapped back
/// to `[min, max]` and clamped below at zero (a generator may emit values
/// slightly outside `[-1, 1]`).
pub fn invert_preprocess(
    series: &MultivariateSeries,
    state: &PreprocessState,
    anchor: PriceAnchor,
) -> Result<MultivariateSeries> {
    check_layout(series, state)?;
    let t = series.t_len();
    let mut values = Array2::zeros((t, series.channels()));
    for (c, st) in state.channels.iter().enumerate() {
        let col = series.column(c);
        match st {
            ChannelState::Price {
                mean,
                std,
                first_price,
                last_price,
            } => {
                let start = match anchor {
                    PriceAnchor::FittedWindow => *first_price,
                    PriceAnchor::Continuation => *last_price,
                };
                let mut log_price = start.ln();
                for r in 0..t {
                    log_price += mean + std * col[r];
                    values[[r, c]] = log_price.exp();
                }
            }
            ChannelState::Volume { min, max } => {
                for r in 0..t {
                    let v = (col[r] + 1.0) / 2.0 * (max - min) + min;
                    values[[r, c]] = v.max(0.0);
                }
            }
        }
    }
    MultivariateSeries::new(
        values,
        series.timestamps().map(<[chrono::NaiveDateTime]>::to_vec),
        series.channel_meta().to_vec(),
    )
}

fn check_layout(series: &MultivariateSeries, state: &PreprocessState) -> Result<()> {
    if series.channels() != state.channels.len() {
        return Err(CoreError::Preprocess(format!(
            "series has {} channels but state describes {}",
            series.channels(),
            state.channels.len()
        )));
    }
    for (c, (meta, st)) in series
        .channel_meta()
        .iter()
        .zip(&state.channels)
        .enumerate()
    {
        let ok = matches!(
            (meta.kind, st),
            (ChannelKind::Price, ChannelState::Price { .. })
                | (ChannelKind::Volume, ChannelState::Volume { .. })
        );
        if !ok {
            return Err(CoreError::Preprocess(format!(
                "channel {c} kind {:?} does not match fitted state",
                meta.kind
            )));
        }
    }
    Ok(())
}

fn log_returns(prices: &[f64]) -> Vec<f64> {
    prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64], mean: f64) -> f64 {
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}
