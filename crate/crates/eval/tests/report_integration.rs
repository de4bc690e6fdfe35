//! End-to-end evaluation of a two-asset market series: report assembly,
//! JSON serialization and figure-data emission.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use comets_core::{ChannelMeta, MultivariateSeries, SESSION_MINUTES};
use comets_eval::{
    evaluate_report, write_figures_data, CorrelationWindowSpec, EvaluationConfig,
};

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Two assets with correlated returns and volume coupled to volatility.
fn market_series(seed: u64, n_days: usize) -> MultivariateSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = n_days * SESSION_MINUTES as usize;
    let mut values = Array2::zeros((t, 4));
    let (mut pa, mut pb) = (100.0f64, 80.0f64);
    for i in 0..t {
        let common = gaussian(&mut rng);
        let ra = 1e-3 * (0.8 * common + 0.6 * gaussian(&mut rng));
        let rb = 1.5e-3 * (0.8 * common + 0.6 * gaussian(&mut rng));
        pa *= ra.exp();
        pb *= rb.exp();
        values[[i, 0]] = pa;
        values[[i, 1]] = 1000.0 + 2e5 * ra.abs() + 20.0 * gaussian(&mut rng);
        values[[i, 2]] = pb;
        values[[i, 3]] = 800.0 + 1e5 * rb.abs() + 15.0 * gaussian(&mut rng);
    }
    let meta = ChannelMeta::market_channels(&["AAA".to_string(), "BBB".to_string()]);
    MultivariateSeries::new(values, None, meta).unwrap()
}

#[test]
fn full_report_on_two_asset_market_data() {
    let real = market_series(1, 12);
    let synthetic = market_series(2, 12);
    let cfg = EvaluationConfig {
        correlation_window: CorrelationWindowSpec::daily(),
        discriminative_window: 24,
        seed: 5,
    };
    let report = evaluate_report(&real, &synthetic, &cfg).unwrap();

    assert_eq!(report.stylized_facts.len(), 2);
    assert_eq!(report.stylized_facts[0].ticker, "AAA");
    assert_eq!(report.stylized_facts[0].volatility_autocorr.len(), 10);
    assert!(report.stylized_facts[0].volume_volatility_pcc.unwrap() > 0.0);
    // C(4, 2) = 6 unordered channel pairs.
    assert_eq!(report.correlation.len(), 6);
    for pair in &report.correlation {
        assert!(pair.cross_correlation_distance >= 0.0);
        assert!(pair.cross_correlation_distance <= 4.0);
        assert!(pair.windowed_wasserstein >= 0.0);
    }
    assert!((0.0..=0.5).contains(&report.discriminative_score));

    // The document roundtrips through JSON.
    let json = serde_json::to_string(&report).unwrap();
    let back: comets_eval::EvaluationReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.correlation, report.correlation);

    // Same inputs, same report (purity).
    let again = evaluate_report(&real, &synthetic, &cfg).unwrap();
    assert_eq!(again.discriminative_score, report.discriminative_score);
    assert_eq!(again.correlation, report.correlation);
}

#[test]
fn figures_data_files_are_written() {
    let real = market_series(3, 4);
    let synthetic = market_series(4, 4);
    let cfg = EvaluationConfig {
        correlation_window: CorrelationWindowSpec::daily(),
        ..EvaluationConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let files = write_figures_data(dir.path(), &real, &synthetic, &cfg).unwrap();
    // 6 pair distributions + 2 assets x 2 horizons.
    assert_eq!(files.len(), 10);
    for f in &files {
        let body = std::fs::read_to_string(f).unwrap();
        assert!(body.starts_with("source,value"));
        assert!(body.lines().count() > 1, "{} is empty", f.display());
    }
}
