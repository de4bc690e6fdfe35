//! Independent numerical oracles for the workspace test suites.
//!
//! Everything in here is deliberately implemented by a different route than
//! the production code it checks: singular values come from a Jacobi
//! eigensolver rather than power iteration, Wasserstein distances from
//! quantile integration rather than CDF differencing, and correlations from
//! a two-pass covariance formula. Test-only; not part of the public API
//! surface of the trained models.

use ndarray::Array2;

/// Largest singular value of `m`, via a cyclic Jacobi eigensolver on the
/// Gram matrix `mᵀm`.
pub fn top_singular_value(m: &Array2<f64>) -> f64 {
    let gram = m.t().dot(m);
    let eigs = jacobi_eigenvalues(&gram);
    eigs.iter().fold(0.0f64, |a, &b| a.max(b.max(0.0))).sqrt()
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi rotation method.
pub fn jacobi_eigenvalues(sym: &Array2<f64>) -> Vec<f64> {
    let n = sym.nrows();
    assert_eq!(n, sym.ncols(), "matrix must be square");
    let mut a = sym.clone();
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).collect()
}

/// 1-D Wasserstein-1 distance by integrating the absolute quantile
/// difference on a fine uniform grid of probability levels.
pub fn wasserstein_1d_quantile(a: &[f64], b: &[f64], levels: usize) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let q = |sorted: &[f64], p: f64| -> f64 {
        // Inverse of the empirical CDF (left-continuous generalized inverse).
        let n = sorted.len();
        let idx = (p * n as f64).ceil() as usize;
        sorted[idx.clamp(1, n) - 1]
    };
    let mut total = 0.0;
    for i in 0..levels {
        let p = (i as f64 + 0.5) / levels as f64;
        total += (q(&sa, p) - q(&sb, p)).abs();
    }
    total / levels as f64
}

/// Pearson correlation via the two-pass covariance formula. Returns 0 when
/// either input is constant.
pub fn pearson_two_pass(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
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
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Sample excess kurtosis (fourth standardized moment minus 3), population
/// normalization.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Unit-lag autocorrelation oracle at arbitrary lag.
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    assert!(lag < xs.len());
    pearson_two_pass(&xs[..xs.len() - lag], &xs[lag..])
}

/// Standard normal CDF via the Abramowitz–Stegun 7.1.26 rational erf
/// approximation (absolute error below 1.5e-7, ample for KS testing).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn erf(x: f64) -> f64 {
    let sign = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// One-sample Kolmogorov–Smirnov statistic of `samples` against the
/// distribution whose CDF is `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!samples.is_empty());
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Two-sided p-value of a one-sample KS statistic `d` at sample size `n`,
/// using the asymptotic Kolmogorov series with Stephens' finite-sample
/// correction of the argument.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let mut p = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += 2.0 * sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn jacobi_matches_known_eigenvalues() {
        let m = array![[2.0, 1.0], [1.0, 2.0]];
        let mut eigs = jacobi_eigenvalues(&m);
        eigs.sort_by(f64::total_cmp);
        assert!((eigs[0] - 1.0).abs() < 1e-10);
        assert!((eigs[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn singular_value_of_diagonal() {
        let m = array![[3.0, 0.0], [0.0, 1.0]];
        assert!((top_singular_value(&m) - 3.0).abs() < 1e-10);
    }

    #[test]
    fn singular_value_of_rank_one() {
        // ||u v'||_2 = ||u|| ||v||
        let u = array![[1.0], [2.0], [2.0]];
        let v = array![[2.0, 0.0, 0.0, 1.0]];
        let m = u.dot(&v);
        assert!((top_singular_value(&m) - 3.0 * 5.0f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn wasserstein_of_shifted_point_masses() {
        let a = vec![0.0; 100];
        let b = vec![2.5; 100];
        assert!((wasserstein_1d_quantile(&a, &b, 1000) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn pearson_of_exact_line() {
        let x: Vec<f64> = (0..50).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| -3.0 * v + 7.0).collect();
        assert!((pearson_two_pass(&x, &y) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn kurtosis_of_two_point_mass_is_minus_two() {
        // Symmetric Bernoulli has kurtosis 1, excess -2.
        let xs: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((excess_kurtosis(&xs) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn normal_cdf_known_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((normal_cdf(1.959963985) - 0.975).abs() < 1e-6);
        assert!((normal_cdf(-1.0) - 0.158655254).abs() < 1e-6);
    }

    #[test]
    fn ks_statistic_of_exact_uniform_grid() {
        // Points at (i + 0.5)/n under U(0,1) leave gaps of exactly 0.5/n.
        let n = 100;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn ks_p_value_calibration() {
        // D = 1.36/sqrt(n) is the classic 5% critical value for large n.
        let n = 10_000;
        let p = ks_p_value(1.36 / (n as f64).sqrt(), n);
        assert!((p - 0.05).abs() < 0.005, "p = {p}");
        assert!(ks_p_value(0.5, n) < 1e-9);
        assert!(ks_p_value(0.001, n) > 0.99);
    }
}
