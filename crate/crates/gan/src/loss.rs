//! Wasserstein objective values from critic scores.

use ndarray::Array2;

use comets_nn::Scalar;

use crate::error::{GanError, Result};

/// Critic and generator objectives from per-sample scores `(B, 1)`:
///
/// * `loss_d = mean(D(fake)) - mean(D(real))` — the critic descends this,
///   pushing real scores up and fake scores down.
/// * `loss_g = -mean(D(fake))` — the generator descends this, pulling fake
///   scores up.
pub fn wgan_losses<S: Scalar>(real: &Array2<S>, fake: &Array2<S>) -> Result<(f64, f64)> {
    let mean_real = score_mean(real, "real")?;
    let mean_fake = score_mean(fake, "fake")?;
    Ok((mean_fake - mean_real, -mean_fake))
}

fn score_mean<S: Scalar>(scores: &Array2<S>, side: &str) -> Result<f64> {
    if scores.nrows() == 0 || scores.ncols() != 1 {
        return Err(GanError::Input(format!(
            "{side} scores must be a non-empty column, got {:?}",
            scores.dim()
        )));
    }
    Ok(scores.iter().map(|v| v.as_f64()).sum::<f64>() / scores.nrows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::arr2;

    #[test]
    fn constant_critic_gives_zero_critic_loss() {
        let real = arr2(&[[3.0], [3.0]]);
        let fake = arr2(&[[3.0], [3.0], [3.0]]);
        let (loss_d, loss_g) = wgan_losses(&real, &fake).unwrap();
        assert_relative_eq!(loss_d, 0.0, epsilon = 1e-12);
        assert_relative_eq!(loss_g, -3.0, epsilon = 1e-12);
    }

    #[test]
    fn losses_match_hand_computed_means() {
        let real = arr2(&[[1.0], [2.0], [3.0]]);
        let fake = arr2(&[[-1.0], [0.0]]);
        let (loss_d, loss_g) = wgan_losses(&real, &fake).unwrap();
        assert_relative_eq!(loss_d, -0.5 - 2.0, epsilon = 1e-12);
        assert_relative_eq!(loss_g, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn losses_are_permutation_invariant() {
        let real = arr2(&[[0.5], [-1.5], [2.5]]);
        let fake = arr2(&[[0.25], [4.0], [-3.0]]);
        let shuffled_real = arr2(&[[2.5], [0.5], [-1.5]]);
        let shuffled_fake = arr2(&[[-3.0], [0.25], [4.0]]);
        assert_eq!(
            wgan_losses(&real, &fake).unwrap(),
            wgan_losses(&shuffled_real, &shuffled_fake).unwrap()
        );
    }

    #[test]
    fn empty_batch_is_rejected() {
        let real: Array2<f64> = Array2::zeros((0, 1));
        let fake = arr2(&[[1.0]]);
        assert!(wgan_losses(&real, &fake).is_err());
        let wide = arr2(&[[1.0, 2.0]]);
        assert!(wgan_losses(&fake, &wide).is_err());
    }
}
