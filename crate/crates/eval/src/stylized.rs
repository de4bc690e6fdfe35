//! Stylized facts of minutely market data: tail weight and aggregational
//! normality of log-returns, the decay of return autocorrelation, volatility
//! clustering across days, and the volume-volatility relationship.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use comets_core::{ChannelKind, MultivariateSeries, SESSION_MINUTES};

use crate::correlation::{autocorrelation, pearson};
use crate::error::{EvalError, Result};

/// Intraday return horizons (minutes) at which tail statistics are computed.
pub const KURTOSIS_HORIZONS: [usize; 2] = [1, 15];
/// Intraday lags (minutes) for the return autocorrelation distributions.
pub const RETURN_AUTOCORR_LAGS: [usize; 4] = [1, 10, 20, 30];
/// Day lags for the daily-volatility autocorrelation.
pub const VOLATILITY_LAGS: Range<usize> = 1..11;
/// Window length (steps) for the volume-volatility correlation: two days.
pub const VOLUME_VOLATILITY_WINDOW: usize = 2 * SESSION_MINUTES as usize;

/// Distribution of a per-day statistic at one lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagDistribution {
    pub lag: usize,
    pub per_day: Vec<f64>,
    pub mean: f64,
}

/// Stylized-fact statistics for one asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetFacts {
    pub ticker: String,
    /// Excess kurtosis of pooled 1-minute log-returns.
    pub excess_kurtosis_1m: f64,
    /// Excess kurtosis of pooled non-overlapping 15-minute log-returns.
    pub excess_kurtosis_15m: f64,
    /// Jarque-Bera normality statistic at the 1-minute horizon.
    pub normality_stat_1m: f64,
    /// Jarque-Bera normality statistic at the 15-minute horizon.
    pub normality_stat_15m: f64,
    /// Whether kurtosis moves toward 0 under aggregation.
    pub aggregational_normality: bool,
    /// Per-day return autocorrelation distributions at minute lags 1/10/20/30.
    pub return_autocorr: Vec<LagDistribution>,
    /// Autocorrelation of daily volatility at day lags 1..=10.
    pub volatility_autocorr: Vec<f64>,
    /// Correlation between mean volume and return volatility over
    /// two-day windows; absent when the asset carries no volume channel.
    pub volume_volatility_pcc: Option<f64>,
}

/// Row ranges of complete trading days (exactly 390 rows each).
///
/// Timestamped series are grouped by calendar date; series without
/// timestamps are chunked from the first row. Incomplete leading or trailing
/// days are dropped.
pub fn complete_days(series: &MultivariateSeries) -> Vec<Range<usize>> {
    let day_len = SESSION_MINUTES as usize;
    let mut days = Vec::new();
    match series.timestamps() {
        Some(ts) => {
            let mut start = 0;
            for i in 1..=ts.len() {
                if i == ts.len() || ts[i].date() != ts[start].date() {
                    if i - start == day_len {
                        days.push(start..i);
                    }
                    start = i;
                }
            }
        }
        None => {
            let mut start = 0;
            while start + day_len <= series.t_len() {
                days.push(start..start + day_len);
                start += day_len;
            }
        }
    }
    days
}

/// Non-overlapping log-returns at a `dt`-minute horizon within one day.
pub(crate) fn day_returns(prices: &[f64], dt: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(prices.len() / dt);
    let mut i = 0;
    while i + dt < prices.len() {
        let (a, b) = (prices[i], prices[i + dt]);
        if a <= 0.0 || b <= 0.0 {
            return Err(EvalError::NonFinite(format!(
                "non-positive price {} prevents log-returns",
                if a <= 0.0 { a } else { b }
            )));
        }
        out.push((b / a).ln());
        i += dt;
    }
    Ok(out)
}

/// Fourth standardized moment minus 3, population normalization.
pub fn excess_kurtosis(xs: &[f64]) -> Result<f64> {
    let (m2, _, m4) = central_moments(xs)?;
    if m2 == 0.0 {
        return Err(EvalError::NonFinite(
            "kurtosis of a constant sample is undefined".into(),
        ));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Jarque-Bera statistic `n/6 * (S^2 + K^2/4)`.
pub fn jarque_bera(xs: &[f64]) -> Result<f64> {
    let (m2, m3, m4) = central_moments(xs)?;
    if m2 == 0.0 {
        return Err(EvalError::NonFinite(
            "normality statistic of a constant sample is undefined".into(),
        ));
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2) - 3.0;
    Ok(xs.len() as f64 / 6.0 * (skew * skew + kurt * kurt / 4.0))
}

fn central_moments(xs: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() < 4 {
        return Err(EvalError::Insufficient(format!(
            "moment statistics need >= 4 samples, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    Ok((m2 / n, m3 / n, m4 / n))
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Compute [`AssetFacts`] for every asset with a price channel.
///
/// Series without price channels (raw benchmark data) yield an empty report.
/// Statistics that need more days than supplied fail with an error naming
/// the statistic; day lag 10 of the volatility autocorrelation needs
/// 12 complete trading days.
pub fn stylized_facts_report(series: &MultivariateSeries) -> Result<Vec<AssetFacts>> {
    let tickers = series.tickers();
    if tickers.is_empty() {
        return Ok(Vec::new());
    }
    let days = complete_days(series);
    if days.len() < 2 {
        return Err(EvalError::Insufficient(format!(
            "stylized facts need >= 2 complete trading days, found {}",
            days.len()
        )));
    }
    tickers
        .iter()
        .map(|t| asset_facts(series, t, &days))
        .collect()
}

fn asset_facts(
    series: &MultivariateSeries,
    ticker: &str,
    days: &[Range<usize>],
) -> Result<AssetFacts> {
    let price_col = series
        .channel_index(ticker, ChannelKind::Price)
        .ok_or_else(|| EvalError::InvalidSpec(format!("no price channel for {ticker}")))?;
    let prices = series.column(price_col);
    let volumes = series
        .channel_index(ticker, ChannelKind::Volume)
        .map(|c| series.column(c));

    // Pooled returns per horizon and per-day 1-minute returns.
    let mut pooled_1m = Vec::new();
    let mut pooled_15m = Vec::new();
    let mut per_day_1m: Vec<Vec<f64>> = Vec::with_capacity(days.len());
    for day in days {
        let p = &prices[day.clone()];
        let r1 = day_returns(p, 1)?;
        pooled_15m.extend(day_returns(p, 15)?);
        pooled_1m.extend(r1.iter().copied());
        per_day_1m.push(r1);
    }

    let k1 = excess_kurtosis(&pooled_1m)
        .map_err(|e| insufficient(ticker, "1-minute kurtosis", e))?;
    let k15 = excess_kurtosis(&pooled_15m)
        .map_err(|e| insufficient(ticker, "15-minute kurtosis", e))?;
    let jb1 =
        jarque_bera(&pooled_1m).map_err(|e| insufficient(ticker, "1-minute normality", e))?;
    let jb15 =
        jarque_bera(&pooled_15m).map_err(|e| insufficient(ticker, "15-minute normality", e))?;

    let mut return_autocorr = Vec::with_capacity(RETURN_AUTOCORR_LAGS.len());
    for lag in RETURN_AUTOCORR_LAGS {
        let per_day: Vec<f64> = per_day_1m
            .iter()
            .map(|r| autocorrelation(r, lag))
            .collect::<Result<_>>()
            .map_err(|e| insufficient(ticker, &format!("return autocorrelation lag {lag}"), e))?;
        let mean = per_day.iter().sum::<f64>() / per_day.len() as f64;
        return_autocorr.push(LagDistribution { lag, per_day, mean });
    }

    let daily_vol: Vec<f64> = per_day_1m.iter().map(|r| population_std(r)).collect();
    let mut volatility_autocorr = Vec::new();
    for lag in VOLATILITY_LAGS {
        volatility_autocorr.push(autocorrelation(&daily_vol, lag).map_err(|_| {
            EvalError::Insufficient(format!(
                "{ticker}: daily volatility autocorrelation at lag {lag} needs >= {} complete days, found {}",
                lag + 2,
                daily_vol.len()
            ))
        })?);
    }

    let volume_volatility_pcc = match volumes {
        None => None,
        Some(vol) => {
            let mut mean_volume = Vec::new();
            let mut window_vol = Vec::new();
            for pair in days.chunks(2) {
                if pair.len() < 2 {
                    break;
                }
                let mut vols = Vec::with_capacity(VOLUME_VOLATILITY_WINDOW);
                let mut rets = Vec::new();
                for day in pair {
                    vols.extend_from_slice(&vol[day.clone()]);
                    rets.extend(day_returns(&prices[day.clone()], 1)?);
                }
                mean_volume.push(vols.iter().sum::<f64>() / vols.len() as f64);
                window_vol.push(population_std(&rets));
            }
            Some(pearson(&mean_volume, &window_vol).map_err(|_| {
                EvalError::Insufficient(format!(
                    "{ticker}: volume-volatility correlation needs >= 4 complete days, found {}",
                    days.len()
                ))
            })?)
        }
    };

    Ok(AssetFacts {
        ticker: ticker.to_string(),
        excess_kurtosis_1m: k1,
        excess_kurtosis_15m: k15,
        normality_stat_1m: jb1,
        normality_stat_15m: jb15,
        aggregational_normality: k15.abs() < k1.abs(),
        return_autocorr,
        volatility_autocorr,
        volume_volatility_pcc,
    })
}

fn insufficient(ticker: &str, stat: &str, cause: EvalError) -> EvalError {
    EvalError::Insufficient(format!("{ticker}: {stat}: {cause}"))
}
