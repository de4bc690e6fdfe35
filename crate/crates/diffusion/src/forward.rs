//! Closed-form forward (noising) process.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use comets_nn::Scalar;

use crate::error::Result;
use crate::schedule::NoiseSchedule;

/// Sample `x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps` for
/// `t` in `1..=T`, returning both the noised window and the drawn noise.
pub fn forward_sample<S: Scalar>(
    x0: &Array2<S>,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<(Array2<S>, Array2<S>)> {
    schedule.check_step(t)?;
    let ab = schedule.alpha_bar(t);
    let scale = S::from_f64(ab.sqrt());
    let noise_scale = S::from_f64((1.0 - ab).sqrt());
    let eps = Array2::from_shape_fn(x0.dim(), |_| S::from_f64(rng.sample(StandardNormal)));
    let x_t = Array2::from_shape_fn(x0.dim(), |idx| x0[idx] * scale + eps[idx] * noise_scale);
    Ok((x_t, eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn probe() -> Array2<f64> {
        Array2::from_shape_fn((6, 3), |(r, c)| (r as f64 - 2.0) * 0.3 + c as f64 * 0.1)
    }

    #[test]
    fn identity_schedule_returns_x0_unchanged() {
        let schedule = NoiseSchedule::unchecked(vec![0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = probe();
        let (x_t, _) = forward_sample(&x0, 2, &schedule, &mut rng).unwrap();
        assert_eq!(x_t, x0);
    }

    #[test]
    fn noised_sample_matches_closed_form_from_returned_noise() {
        let schedule = NoiseSchedule::default_linear();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x0 = probe();
        let t = 40;
        let (x_t, eps) = forward_sample(&x0, t, &schedule, &mut rng).unwrap();
        let ab = schedule.alpha_bar(t);
        for idx in [(0, 0), (3, 1), (5, 2)] {
            let expect = ab.sqrt() * x0[idx] + (1.0 - ab).sqrt() * eps[idx];
            assert!((x_t[idx] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_range_step_is_an_error() {
        let schedule = NoiseSchedule::default_linear();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(forward_sample(&probe(), 0, &schedule, &mut rng).is_err());
        assert!(forward_sample(&probe(), 101, &schedule, &mut rng).is_err());
    }
}
