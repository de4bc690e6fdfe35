//! Order-1 Wasserstein distance between two empirical 1-D distributions,
//! computed exactly by sweeping the pooled support and integrating the
//! absolute difference of the two empirical CDFs.

use crate::error::{EvalError, Result};

pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::Insufficient(
            "wasserstein_1d needs two non-empty samples".into(),
        ));
    }
    if let Some(v) = a.iter().chain(b).find(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(format!(
            "wasserstein_1d input contains {v}"
        )));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let na = sa.len() as f64;
    let nb = sb.len() as f64;
    let (mut i, mut j) = (0usize, 0usize);
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    while i < sa.len() || j < sb.len() {
        let x = match (sa.get(i), sb.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        if let Some(p) = prev {
            // On (p, x) both CDFs are constant at the consumed fractions.
            total += (i as f64 / na - j as f64 / nb).abs() * (x - p);
        }
        while i < sa.len() && sa[i] == x {
            i += 1;
        }
        while j < sb.len() && sb[j] == x {
            j += 1;
        }
        prev = Some(x);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_multisets_have_zero_distance() {
        let a = vec![3.0, 1.0, 2.0, 1.0];
        let b = vec![1.0, 1.0, 2.0, 3.0];
        assert_eq!(wasserstein_1d(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn point_masses_distance_is_translation() {
        assert_relative_eq!(wasserstein_1d(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_relative_eq!(wasserstein_1d(&[-2.5], &[4.0]).unwrap(), 6.5);
    }

    #[test]
    fn matches_quantile_integration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..100).map(|_| rng.random::<f64>() * 3.0 - 1.0).collect();
        let b: Vec<f64> = (0..100).map(|_| rng.random::<f64>() * 2.0 + 0.5).collect();
        // 10_000 levels puts 100 midpoints inside every 1/100-wide step of
        // both empirical quantile functions, so the oracle is exact here.
        let oracle = comets_testkit::wasserstein_1d_quantile(&a, &b, 10_000);
        assert_relative_eq!(wasserstein_1d(&a, &b).unwrap(), oracle, epsilon = 1e-9);
    }

    #[test]
    fn matches_oracle_on_unequal_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..60).map(|_| rng.random::<f64>() - 0.3).collect();
        // Levels divisible by lcm(40, 60) = 120 make the grid exact.
        let oracle = comets_testkit::wasserstein_1d_quantile(&a, &b, 12_000);
        assert_relative_eq!(wasserstein_1d(&a, &b).unwrap(), oracle, epsilon = 1e-9);
    }

    #[test]
    fn metric_properties_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let n = rng.random_range(2..30);
            let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()
            };
            let a = sample(&mut rng);
            let b = sample(&mut rng);
            let c = sample(&mut rng);
            let dab = wasserstein_1d(&a, &b).unwrap();
            let dba = wasserstein_1d(&b, &a).unwrap();
            let dac = wasserstein_1d(&a, &c).unwrap();
            let dbc = wasserstein_1d(&b, &c).unwrap();
            assert_relative_eq!(dab, dba, epsilon = 1e-9);
            assert!(wasserstein_1d(&a, &a).unwrap() <= 1e-12);
            assert!(dac <= dab + dbc + 1e-9, "triangle inequality violated");
            assert!(dab >= 0.0);
        }
    }

    #[test]
    fn rejects_empty_and_non_finite_input() {
        assert!(wasserstein_1d(&[], &[1.0]).is_err());
        assert!(wasserstein_1d(&[1.0], &[f64::NAN]).is_err());
    }
}
