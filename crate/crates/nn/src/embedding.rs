//! Sinusoidal positional encodings for time-of-day and diffusion-step
//! conditioning.

use ndarray::Array2;

use crate::error::{NnError, Result};
use crate::scalar::Scalar;

/// Interleaved sin/cos encoding of a single non-negative bin index over
/// geometrically spaced wavelengths (base 10000): entry `2j` is
/// `sin(bin / 10000^(2j/dim))`, entry `2j+1` the matching cosine.
pub fn sinusoidal_embedding(bin: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(NnError::Spec(format!(
            "sinusoidal embedding dimension must be even and positive, got {dim}"
        )));
    }
    let mut out = vec![0.0; dim];
    for j in 0..dim / 2 {
        let freq = 10000f64.powf(-(2.0 * j as f64) / dim as f64);
        let angle = bin as f64 * freq;
        out[2 * j] = angle.sin();
        out[2 * j + 1] = angle.cos();
    }
    Ok(out)
}

/// Encode a sequence of bins as a `(len, dim)` matrix.
pub fn sinusoidal_rows<S: Scalar>(bins: &[usize], dim: usize) -> Result<Array2<S>> {
    let mut out = Array2::zeros((bins.len(), dim));
    for (r, &bin) in bins.iter().enumerate() {
        for (c, v) in sinusoidal_embedding(bin, dim)?.into_iter().enumerate() {
            out[[r, c]] = S::from_f64(v);
        }
    }
    Ok(out)
}

/// Map minutes-since-open to 10-minute conditioning bins (0..=38 within a
/// 390-minute session).
pub fn minute_to_bin(minute_of_day: u32) -> usize {
    (minute_of_day / 10) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_zero_alternates_zero_one() {
        let e = sinusoidal_embedding(0, 8).unwrap();
        assert_eq!(e, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn odd_dimension_is_rejected() {
        assert!(sinusoidal_embedding(3, 5).is_err());
    }

    #[test]
    fn entries_are_bounded() {
        for bin in 0..200 {
            for v in sinusoidal_embedding(bin, 16).unwrap() {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn session_bins_are_pairwise_distinct() {
        let dim = 16;
        let encs: Vec<Vec<f64>> = (0..39)
            .map(|b| sinusoidal_embedding(b, dim).unwrap())
            .collect();
        for i in 0..encs.len() {
            for j in i + 1..encs.len() {
                let dist: f64 = encs[i]
                    .iter()
                    .zip(&encs[j])
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                assert!(dist > 1e-6, "bins {i} and {j} collide");
            }
        }
    }

    #[test]
    fn minute_binning_covers_session() {
        assert_eq!(minute_to_bin(0), 0);
        assert_eq!(minute_to_bin(9), 0);
        assert_eq!(minute_to_bin(10), 1);
        assert_eq!(minute_to_bin(389), 38);
    }
}
