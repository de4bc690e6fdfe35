//! The central multivariate series container: a `T x C` matrix of values with
//! per-channel metadata and optional minute timestamps.

use chrono::{NaiveDateTime, Timelike};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Minutes since midnight at which the trading session opens (09:30).
pub const SESSION_OPEN_MINUTE: u32 = 9 * 60 + 30;
/// Length of one trading session in minutes (09:30-16:00).
pub const SESSION_MINUTES: u32 = 390;

/// What a channel holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelKind {
    Price,
    Volume,
    Raw,
}

impl ChannelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelKind::Price => "price",
            ChannelKind::Volume => "volume",
            ChannelKind::Raw => "raw",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "price" => Ok(ChannelKind::Price),
            "volume" => Ok(ChannelKind::Volume),
            "raw" => Ok(ChannelKind::Raw),
            other => Err(CoreError::InvalidSeries(format!(
                "unknown channel kind `{other}`"
            ))),
        }
    }
}

/// Per-channel metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub ticker: String,
    pub kind: ChannelKind,
}

impl ChannelMeta {
    pub fn new(ticker: impl Into<String>, kind: ChannelKind) -> Self {
        Self {
            ticker: ticker.into(),
            kind,
        }
    }

    /// `n` anonymous raw channels named `ch0..`, used by synthetic datasets.
    pub fn raw_channels(n: usize) -> Vec<ChannelMeta> {
        (0..n)
            .map(|i| ChannelMeta::new(format!("ch{i}"), ChannelKind::Raw))
            .collect()
    }

    /// The `[mid, vol]` channel pair layout for a list of tickers.
    pub fn market_channels(tickers: &[String]) -> Vec<ChannelMeta> {
        tickers
            .iter()
            .flat_map(|t| {
                [
                    ChannelMeta::new(t.clone(), ChannelKind::Price),
                    ChannelMeta::new(t.clone(), ChannelKind::Volume),
                ]
            })
            .collect()
    }
}

/// A length-`T`, `C`-channel time-series.
///
/// For stock data `C = 2n`: a price channel followed by a volume channel per
/// asset. Synthetic benchmark data uses `Raw` channels without timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateSeries {
    values: Array2<f64>,
    timestamps: Option<Vec<NaiveDateTime>>,
    channel_meta: Vec<ChannelMeta>,
}

impl MultivariateSeries {
    pub fn new(
        values: Array2<f64>,
        timestamps: Option<Vec<NaiveDateTime>>,
        channel_meta: Vec<ChannelMeta>,
    ) -> Result<Self> {
        let (t, c) = values.dim();
        if t == 0 {
            return Err(CoreError::InvalidSeries("series must have T >= 1".into()));
        }
        if c != channel_meta.len() {
            return Err(CoreError::InvalidSeries(format!(
                "value matrix has {c} channels but metadata describes {}",
                channel_meta.len()
            )));
        }
        if let Some((r, col)) = values
            .indexed_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|((r, col), _)| (r, col))
        {
            return Err(CoreError::InvalidSeries(format!(
                "non-finite value at row {r}, channel {col}"
            )));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != t {
                return Err(CoreError::InvalidSeries(format!(
                    "{} timestamps for {t} rows",
                    ts.len()
                )));
            }
            if let Some(w) = ts.windows(2).position(|w| w[0] >= w[1]) {
                return Err(CoreError::InvalidSeries(format!(
                    "timestamps not strictly increasing at row {}",
                    w + 1
                )));
            }
        }
        let has_market = channel_meta
            .iter()
            .any(|m| matches!(m.kind, ChannelKind::Price | ChannelKind::Volume));
        if has_market && c % 2 != 0 {
            return Err(CoreError::InvalidSeries(
                "price/volume series must have an even channel count".into(),
            ));
        }
        Ok(Self {
            values,
            timestamps,
            channel_meta,
        })
    }

    pub fn t_len(&self) -> usize {
        self.values.nrows()
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn timestamps(&self) -> Option<&[NaiveDateTime]> {
        self.timestamps.as_deref()
    }

    pub fn channel_meta(&self) -> &[ChannelMeta] {
        &self.channel_meta
    }

    /// Index of the channel with the given ticker and kind.
    pub fn channel_index(&self, ticker: &str, kind: ChannelKind) -> Option<usize> {
        self.channel_meta
            .iter()
            .position(|m| m.ticker == ticker && m.kind == kind)
    }

    /// One column as an owned vector.
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.values.column(c).to_vec()
    }

    /// Minute-of-day (minutes since session open, in `[0, 389]`) for every row.
    ///
    /// Derived from timestamps when present; synthetic series without
    /// timestamps use the row index modulo the session length.
    pub fn minute_of_day(&self) -> Result<Vec<u32>> {
        match &self.timestamps {
            Some(ts) => ts.iter().map(|t| minute_of_day_of(t)).collect(),
            None => Ok((0..self.t_len())
                .map(|i| (i as u32) % SESSION_MINUTES)
                .collect()),
        }
    }

    /// Distinct tickers among price/volume channels, in channel order.
    pub fn tickers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for m in &self.channel_meta {
            if m.kind == ChannelKind::Price && !out.contains(&m.ticker) {
                out.push(m.ticker.clone());
            }
        }
        out
    }
}

/// Minutes since session open for a timestamp inside the trading session.
pub fn minute_of_day_of(t: &NaiveDateTime) -> Result<u32> {
    let m = t.time().hour() * 60 + t.time().minute();
    if m < SESSION_OPEN_MINUTE || m >= SESSION_OPEN_MINUTE + SESSION_MINUTES {
        return Err(CoreError::InvalidSeries(format!(
            "timestamp {t} falls outside the 09:30-16:00 session"
        )));
    }
    Ok(m - SESSION_OPEN_MINUTE)
}
