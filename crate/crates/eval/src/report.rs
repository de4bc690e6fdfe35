//! Full evaluation of a synthetic series against its real counterpart:
//! stylized facts, per-pair correlation fidelity and the discriminative
//! score, serializable as one JSON document.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use comets_core::{
    apply_preprocess, fit_preprocess, ChannelKind, MultivariateSeries,
};

use crate::correlation::{
    cross_correlation_distance, windowed_correlations, CorrelationWindowSpec,
};
use crate::discriminative::discriminative_score;
use crate::error::{EvalError, Result};
use crate::stylized::{complete_days, day_returns, stylized_facts_report, AssetFacts};
use crate::wasserstein::wasserstein_1d;

/// Settings for [`evaluate_report`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationConfig {
    /// Window layout for windowed correlation distributions.
    pub correlation_window: CorrelationWindowSpec,
    /// Length (steps) of the windows fed to the discriminative classifier.
    pub discriminative_window: usize,
    /// Seed for the classifier split and initialization.
    pub seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            correlation_window: CorrelationWindowSpec::daily(),
            discriminative_window: 24,
            seed: 7,
        }
    }
}

/// Correlation fidelity of one channel pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelationReport {
    pub channel_a: String,
    pub channel_b: String,
    /// Squared difference of the real and synthetic full-series correlations.
    pub cross_correlation_distance: f64,
    /// Wasserstein distance between the real and synthetic windowed
    /// correlation distributions.
    pub windowed_wasserstein: f64,
}

/// One row of [`correlation_benchmark`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBenchmark {
    pub channel_a: String,
    pub channel_b: String,
    pub wasserstein: f64,
}

/// The complete evaluation document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Stylized facts of the synthetic series, one entry per asset.
    pub stylized_facts: Vec<AssetFacts>,
    /// Correlation fidelity for every unordered channel pair.
    pub correlation: Vec<PairCorrelationReport>,
    /// `|test accuracy - 0.5|` of the real-vs-synthetic classifier.
    pub discriminative_score: f64,
}

/// Human-readable channel label `TICKER#kind`.
pub fn channel_label(series: &MultivariateSeries, c: usize) -> String {
    let meta = &series.channel_meta()[c];
    format!("{}#{}", meta.ticker, meta.kind.as_str())
}

fn check_layouts(real: &MultivariateSeries, synthetic: &MultivariateSeries) -> Result<()> {
    if real.channel_meta() != synthetic.channel_meta() {
        return Err(EvalError::InvalidSpec(
            "real and synthetic series have different channel layouts".into(),
        ));
    }
    Ok(())
}

/// Produce the full [`EvaluationReport`].
pub fn evaluate_report(
    real: &MultivariateSeries,
    synthetic: &MultivariateSeries,
    cfg: &EvaluationConfig,
) -> Result<EvaluationReport> {
    check_layouts(real, synthetic)?;
    let stylized_facts = stylized_facts_report(synthetic)?;

    let mut correlation = Vec::new();
    for i in 0..real.channels() {
        for j in i + 1..real.channels() {
            let (ri, rj) = (real.column(i), real.column(j));
            let (si, sj) = (synthetic.column(i), synthetic.column(j));
            let d_rho = cross_correlation_distance(&ri, &rj, &si, &sj)?;
            let wr = windowed_correlations(&ri, &rj, &cfg.correlation_window)?;
            let ws = windowed_correlations(&si, &sj, &cfg.correlation_window)?;
            let w1 = wasserstein_1d(&wr, &ws)?;
            correlation.push(PairCorrelationReport {
                channel_a: channel_label(real, i),
                channel_b: channel_label(real, j),
                cross_correlation_distance: d_rho,
                windowed_wasserstein: w1,
            });
        }
    }

    let real_windows = classifier_windows(real, cfg.discriminative_window)?;
    let syn_windows = classifier_windows(synthetic, cfg.discriminative_window)?;
    let discriminative_score = discriminative_score(&real_windows, &syn_windows, cfg.seed)?;

    let report = EvaluationReport {
        stylized_facts,
        correlation,
        discriminative_score,
    };
    check_finite(&report)?;
    Ok(report)
}

/// Per-pair Wasserstein distances between real and synthetic windowed
/// correlation distributions; the diversity table of a benchmark run.
pub fn correlation_benchmark(
    real: &MultivariateSeries,
    synthetic: &MultivariateSeries,
    spec: &CorrelationWindowSpec,
) -> Result<Vec<PairBenchmark>> {
    check_layouts(real, synthetic)?;
    let mut out = Vec::new();
    for i in 0..real.channels() {
        for j in i + 1..real.channels() {
            let wr = windowed_correlations(&real.column(i), &real.column(j), spec)?;
            let ws = windowed_correlations(&synthetic.column(i), &synthetic.column(j), spec)?;
            out.push(PairBenchmark {
                channel_a: channel_label(real, i),
                channel_b: channel_label(real, j),
                wasserstein: wasserstein_1d(&wr, &ws)?,
            });
        }
    }
    Ok(out)
}

/// Slice a series into non-overlapping normalized windows for the
/// discriminative classifier.
///
/// Market series are normalized first (z-scored log-returns, scaled
/// volumes); raw series are windowed as-is.
pub fn classifier_windows(
    series: &MultivariateSeries,
    window: usize,
) -> Result<Vec<Array2<f64>>> {
    if window < 2 {
        return Err(EvalError::InvalidSpec(
            "classifier window must be >= 2 steps".into(),
        ));
    }
    let is_market = series
        .channel_meta()
        .iter()
        .any(|m| matches!(m.kind, ChannelKind::Price | ChannelKind::Volume));
    let values = if is_market {
        let state = fit_preprocess(series)?;
        apply_preprocess(series, &state)?.values().clone()
    } else {
        series.values().clone()
    };
    let mut out = Vec::new();
    let mut start = 0;
    while start + window <= values.nrows() {
        out.push(values.slice(ndarray::s![start..start + window, ..]).to_owned());
        start += window;
    }
    Ok(out)
}

fn check_finite(report: &EvaluationReport) -> Result<()> {
    let check = |name: &str, v: f64| -> Result<()> {
        if v.is_finite() {
            Ok(())
        } else {
            Err(EvalError::NonFinite(format!("{name} is {v}")))
        }
    };
    for facts in &report.stylized_facts {
        check("excess_kurtosis_1m", facts.excess_kurtosis_1m)?;
        check("excess_kurtosis_15m", facts.excess_kurtosis_15m)?;
        check("normality_stat_1m", facts.normality_stat_1m)?;
        check("normality_stat_15m", facts.normality_stat_15m)?;
        for lag in &facts.return_autocorr {
            check("return_autocorr mean", lag.mean)?;
            for v in &lag.per_day {
                check("return_autocorr sample", *v)?;
            }
        }
        for v in &facts.volatility_autocorr {
            check("volatility_autocorr", *v)?;
        }
        if let Some(v) = facts.volume_volatility_pcc {
            check("volume_volatility_pcc", v)?;
        }
    }
    for pair in &report.correlation {
        check("cross_correlation_distance", pair.cross_correlation_distance)?;
        check("windowed_wasserstein", pair.windowed_wasserstein)?;
    }
    check("discriminative_score", report.discriminative_score)
}

/// Write the raw distributions behind the evaluation figures as CSV files
/// (`source,value` rows) and return the created paths.
pub fn write_figures_data(
    dir: &Path,
    real: &MultivariateSeries,
    synthetic: &MultivariateSeries,
    cfg: &EvaluationConfig,
) -> Result<Vec<PathBuf>> {
    check_layouts(real, synthetic)?;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let write_pairs = |path: PathBuf, rows: &[(&str, &[f64])]| -> Result<PathBuf> {
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["source", "value"])?;
        for (source, values) in rows {
            for v in *values {
                w.write_record([source, format!("{v}").as_str()])?;
            }
        }
        w.flush()?;
        Ok(path)
    };

    for i in 0..real.channels() {
        for j in i + 1..real.channels() {
            let wr = windowed_correlations(&real.column(i), &real.column(j), &cfg.correlation_window)?;
            let ws = windowed_correlations(
                &synthetic.column(i),
                &synthetic.column(j),
                &cfg.correlation_window,
            )?;
            let name = format!(
                "windowed_corr_{}_{}.csv",
                sanitize(&channel_label(real, i)),
                sanitize(&channel_label(real, j))
            );
            written.push(write_pairs(dir.join(name), &[("real", &wr), ("synthetic", &ws)])?);
        }
    }

    for ticker in real.tickers() {
        let rc = real.channel_index(&ticker, ChannelKind::Price).unwrap();
        let rp = real.column(rc);
        let sp = synthetic.column(rc);
        for dt in [1usize, 15] {
            let pooled = |series: &MultivariateSeries, prices: &[f64]| -> Result<Vec<f64>> {
                let mut out = Vec::new();
                for day in complete_days(series) {
                    out.extend(day_returns(&prices[day], dt)?);
                }
                Ok(out)
            };
            let r = pooled(real, &rp)?;
            let s = pooled(synthetic, &sp)?;
            let name = format!("returns_{}_dt{dt}.csv", sanitize(&ticker));
            written.push(write_pairs(dir.join(name), &[("real", &r), ("synthetic", &s)])?);
        }
    }
    Ok(written)
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect()
}
