//! CSV ingestion and export.
//!
//! Two formats are supported:
//!
//! * the market format `timestamp,<TICK>_mid,<TICK>_vol[,...]` with ISO-8601
//!   minute timestamps, used for stock mid-prices and volumes;
//! * a plain channel format `ch#kind[,...]` (optionally with a leading
//!   `timestamp` column) used for synthetic datasets, preprocessed series and
//!   generated windows.

use chrono::NaiveDateTime;
use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::series::{
    minute_of_day_of, ChannelKind, ChannelMeta, MultivariateSeries, SESSION_MINUTES,
    SESSION_OPEN_MINUTE,
};

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M";

fn ingest_err(row: usize, msg: impl Into<String>) -> CoreError {
    CoreError::Ingest {
        row,
        msg: msg.into(),
    }
}

/// Read a market CSV with one row per trading minute.
///
/// Channels come out ordered `[t1_mid, t1_vol, t2_mid, t2_vol, ...]` in the
/// order of `expected_tickers`. Rows outside the 09:30-16:00 session are
/// dropped; a missing minute inside a trading day is an error.
pub fn ingest_csv(path: &std::path::Path, expected_tickers: &[String]) -> Result<MultivariateSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;

    // Header: timestamp then <TICK>_mid,<TICK>_vol per expected ticker.
    let headers = reader.headers()?.clone();
    let mut expected_header = vec!["timestamp".to_string()];
    for t in expected_tickers {
        expected_header.push(format!("{t}_mid"));
        expected_header.push(format!("{t}_vol"));
    }
    let got: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
    if got != expected_header {
        let missing: Vec<&String> = expected_header.iter().filter(|c| !got.contains(c)).collect();
        let msg = if missing.is_empty() {
            format!("unexpected column layout {got:?}, want {expected_header:?}")
        } else {
            format!("missing column(s) {missing:?}")
        };
        return Err(ingest_err(0, msg));
    }

    let c = expected_tickers.len() * 2;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut timestamps: Vec<NaiveDateTime> = Vec::new();
    let mut last_ts: Option<NaiveDateTime> = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != c + 1 {
            return Err(ingest_err(
                row,
                format!("expected {} fields, found {}", c + 1, record.len()),
            ));
        }
        let ts = NaiveDateTime::parse_from_str(record[0].trim(), TS_FORMAT)
            .map_err(|e| ingest_err(row, format!("bad timestamp `{}`: {e}", &record[0])))?;
        if let Some(prev) = last_ts {
            if ts <= prev {
                return Err(ingest_err(
                    row,
                    format!("timestamp {ts} not after previous {prev}"),
                ));
            }
        }
        last_ts = Some(ts);

        // Out-of-session rows are filtered, not errors.
        let m = ts.format("%H:%M").to_string();
        let minutes = m[..2].parse::<u32>().unwrap() * 60 + m[3..].parse::<u32>().unwrap();
        if minutes < SESSION_OPEN_MINUTE || minutes >= SESSION_OPEN_MINUTE + SESSION_MINUTES {
            continue;
        }

        let mut vals = Vec::with_capacity(c);
        for (k, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.trim().parse().map_err(|e| {
                ingest_err(row, format!("bad number `{field}` in column {}: {e}", k + 1))
            })?;
            if !v.is_finite() {
                return Err(ingest_err(row, format!("non-finite value in column {}", k + 1)));
            }
            let is_mid = k % 2 == 0;
            if is_mid && v <= 0.0 {
                return Err(ingest_err(row, format!("non-positive mid-price {v}")));
            }
            if !is_mid && v < 0.0 {
                return Err(ingest_err(row, format!("negative volume {v}")));
            }
            vals.push(v);
        }
        rows.push(vals);
        timestamps.push(ts);
    }

    if rows.is_empty() {
        return Err(ingest_err(0, "no in-session rows"));
    }

    // Within each trading day the minutes must be consecutive.
    for (i, pair) in timestamps.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if a.date() == b.date() {
            let ma = minute_of_day_of(a)?;
            let mb = minute_of_day_of(b)?;
            if mb != ma + 1 {
                return Err(ingest_err(
                    i + 2,
                    format!("gap within trading day: {a} followed by {b}"),
                ));
            }
        }
    }

    let t = rows.len();
    let mut values = Array2::zeros((t, c));
    for (r, vals) in rows.iter().enumerate() {
        for (k, v) in vals.iter().enumerate() {
            values[[r, k]] = *v;
        }
    }
    MultivariateSeries::new(
        values,
        Some(timestamps),
        ChannelMeta::market_channels(expected_tickers),
    )
}

/// Write a series in the market CSV format. Requires price/volume channel
/// metadata and timestamps.
pub fn write_market_csv(series: &MultivariateSeries, path: &std::path::Path) -> Result<()> {
    let ts = series.timestamps().ok_or_else(|| {
        CoreError::InvalidSeries("market CSV export requires timestamps".into())
    })?;
    let mut w = csv::WriterBuilder::new().from_path(path)?;
    let mut header = vec!["timestamp".to_string()];
    for m in series.channel_meta() {
        match m.kind {
            ChannelKind::Price => header.push(format!("{}_mid", m.ticker)),
            ChannelKind::Volume => header.push(format!("{}_vol", m.ticker)),
            ChannelKind::Raw => {
                return Err(CoreError::InvalidSeries(
                    "market CSV export requires price/volume channels".into(),
                ))
            }
        }
    }
    w.write_record(&header)?;
    for (r, t) in ts.iter().enumerate() {
        let mut rec = vec![t.format(TS_FORMAT).to_string()];
        for c in 0..series.channels() {
            rec.push(format_float(series.values()[[r, c]]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a series in the plain channel format (`<ticker>#<kind>` headers).
pub fn write_channels_csv(series: &MultivariateSeries, path: &std::path::Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_path(path)?;
    let mut header: Vec<String> = Vec::new();
    if series.timestamps().is_some() {
        header.push("timestamp".into());
    }
    for m in series.channel_meta() {
        header.push(format!("{}#{}", m.ticker, m.kind.as_str()));
    }
    w.write_record(&header)?;
    for r in 0..series.t_len() {
        let mut rec: Vec<String> = Vec::new();
        if let Some(ts) = series.timestamps() {
            rec.push(ts[r].format(TS_FORMAT).to_string());
        }
        for c in 0..series.channels() {
            rec.push(format_float(series.values()[[r, c]]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a series written by [`write_channels_csv`].
pub fn read_channels_csv(path: &std::path::Path) -> Result<MultivariateSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let has_ts = headers.first().map(|h| h == "timestamp").unwrap_or(false);
    let meta_cols = if has_ts { &headers[1..] } else { &headers[..] };
    let mut meta = Vec::new();
    for h in meta_cols {
        let (ticker, kind) = h.split_once('#').ok_or_else(|| {
            ingest_err(0, format!("channel header `{h}` is not in ticker#kind form"))
        })?;
        meta.push(ChannelMeta::new(ticker, ChannelKind::parse(kind)?));
    }
    let c = meta.len();
    let mut rows: Vec<f64> = Vec::new();
    let mut timestamps = Vec::new();
    let mut n = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let expect = c + usize::from(has_ts);
        if record.len() != expect {
            return Err(ingest_err(
                i + 1,
                format!("expected {expect} fields, found {}", record.len()),
            ));
        }
        let mut fields = record.iter();
        if has_ts {
            let raw = fields.next().unwrap();
            timestamps.push(
                NaiveDateTime::parse_from_str(raw.trim(), TS_FORMAT)
                    .map_err(|e| ingest_err(i + 1, format!("bad timestamp `{raw}`: {e}")))?,
            );
        }
        for field in fields {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|e| ingest_err(i + 1, format!("bad number `{field}`: {e}")))?;
            rows.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(ingest_err(0, "empty channel CSV"));
    }
    let values = Array2::from_shape_vec((n, c), rows)
        .map_err(|e| CoreError::InvalidSeries(e.to_string()))?;
    MultivariateSeries::new(values, has_ts.then_some(timestamps), meta)
}

/// Shortest round-trippable decimal representation.
fn format_float(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}
