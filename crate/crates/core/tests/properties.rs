//! Property tests for the core data plumbing.

use comets_core::{
    apply_preprocess, fit_preprocess, generate_sines, invert_preprocess, segment, ChannelMeta,
    MultivariateSeries, PriceAnchor, SyntheticDatasetSpec,
};
use ndarray::Array2;
use proptest::prelude::*;

fn market_fixture(t: usize, assets: usize, seed: u64) -> MultivariateSeries {
    use rand::Rng;
    let mut rng = comets_core::substream(seed, "test.fixture");
    let mut values = Array2::zeros((t, assets * 2));
    for a in 0..assets {
        let mut price = 50.0 + rng.random::<f64>() * 100.0;
        for r in 0..t {
            price *= (0.002 * (rng.random::<f64>() - 0.5)).exp();
            values[[r, 2 * a]] = price;
            values[[r, 2 * a + 1]] = (rng.random::<f64>() * 1e4).round();
        }
    }
    let tickers: Vec<String> = (0..assets).map(|a| format!("T{a}")).collect();
    MultivariateSeries::new(values, None, ChannelMeta::market_channels(&tickers)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn preprocess_roundtrip_is_identity(
        t in 3usize..40,
        assets in 1usize..4,
        seed in 0u64..1000,
    ) {
        let raw = market_fixture(t, assets, seed);
        let state = fit_preprocess(&raw).unwrap();
        let normalized = apply_preprocess(&raw, &state).unwrap();
        let back = invert_preprocess(&normalized, &state, PriceAnchor::FittedWindow).unwrap();
        for r in 0..t - 1 {
            for c in 0..assets * 2 {
                let want = raw.values()[[r + 1, c]];
                let got = back.values()[[r, c]];
                let denom = want.abs().max(1e-12);
                prop_assert!(
                    ((got - want) / denom).abs() <= 1e-9,
                    "row {r} channel {c}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn sines_are_bounded(channels in 1usize..6, t in 1usize..200, seed in 0u64..1000) {
        let spec = SyntheticDatasetSpec::sines(channels, t, seed);
        let s = generate_sines(&spec).unwrap();
        for v in s.values() {
            prop_assert!((-1.0..=1.0).contains(v));
        }
    }

    #[test]
    fn segment_pairs_tile_the_series(t in 4usize..60, p in 1usize..8, f in 2usize..8) {
        prop_assume!(t >= p + f);
        let values = Array2::from_shape_fn((t, 2), |(r, c)| (r * 2 + c) as f64);
        let s = MultivariateSeries::new(values, None, ChannelMeta::raw_channels(2)).unwrap();
        let pairs = segment(&s, p, f).unwrap();
        prop_assert_eq!(pairs.len(), t - f - p + 1);
        for pair in &pairs {
            let t0 = pair.t_origin;
            prop_assert_eq!(pair.past[[0, 0]], ((t0 - p) * 2) as f64);
            prop_assert_eq!(pair.future[[f - 1, 0]], ((t0 + f - 1) * 2) as f64);
        }
    }
}
