//! Central finite-difference verification of analytic gradients.
//!
//! Instantiate the model under test in `f64` (see [`ParamSet::cast`]) so a
//! step of 1e-4 is well inside the precision budget, rebuild the forward
//! pass inside the supplied closure, and compare against the gradients the
//! tape produced.

use ndarray::Array2;
use rand::Rng;

use crate::params::{GradientMap, ParamSet};

/// Worst relative error between analytic parameter gradients and central
/// finite differences, probing up to `probes` random coordinates per
/// parameter.
pub fn max_param_grad_error<F, R>(
    loss_fn: F,
    params: &ParamSet<f64>,
    analytic: &GradientMap,
    step: f64,
    probes: usize,
    rng: &mut R,
) -> f64
where
    F: Fn(&ParamSet<f64>) -> f64,
    R: Rng + ?Sized,
{
    let mut worst = 0.0f64;
    for (name, grad) in analytic.iter() {
        let n = grad.len();
        for _ in 0..probes.min(n) {
            let flat = rng.random_range(0..n);
            let (r, c) = (flat / grad.ncols(), flat % grad.ncols());
            let mut plus = params.clone();
            plus.get_mut(name).unwrap().values[[r, c]] += step;
            let mut minus = params.clone();
            minus.get_mut(name).unwrap().values[[r, c]] -= step;
            let fd = (loss_fn(&plus) - loss_fn(&minus)) / (2.0 * step);
            worst = worst.max(relative_error(fd, grad[[r, c]]));
        }
    }
    worst
}

/// Worst relative error between an analytic input gradient and central
/// finite differences over up to `probes` random coordinates.
pub fn max_input_grad_error<F, R>(
    loss_fn: F,
    x: &Array2<f64>,
    analytic: &Array2<f64>,
    step: f64,
    probes: usize,
    rng: &mut R,
) -> f64
where
    F: Fn(&Array2<f64>) -> f64,
    R: Rng + ?Sized,
{
    let n = x.len();
    let mut worst = 0.0f64;
    for _ in 0..probes.min(n) {
        let flat = rng.random_range(0..n);
        let (r, c) = (flat / x.ncols(), flat % x.ncols());
        let mut plus = x.clone();
        plus[[r, c]] += step;
        let mut minus = x.clone();
        minus[[r, c]] -= step;
        let fd = (loss_fn(&plus) - loss_fn(&minus)) / (2.0 * step);
        worst = worst.max(relative_error(fd, analytic[[r, c]]));
    }
    worst
}

fn relative_error(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, Mode};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_loss_gradient_verifies() {
        // L(w) = mean((x @ w)^2), a case with a simple closed form.
        let mut params: ParamSet<f64> = ParamSet::new();
        params
            .insert("w", array![[0.3, -0.8], [1.2, 0.4]], true)
            .unwrap();
        let x = array![[1.0, 2.0], [0.5, -1.0], [2.0, 0.0]];
        let loss = |p: &ParamSet<f64>| {
            let mut g: Graph<f64> = Graph::new(Mode::Eval);
            let xin = g.input(x.clone());
            let w = g.param(p, "w").unwrap();
            let y = g.matmul(xin, w).unwrap();
            let sq = g.mul(y, y).unwrap();
            let l = g.mean_all(sq);
            g.scalar(l).unwrap()
        };
        let mut g: Graph<f64> = Graph::new(Mode::Train);
        let xin = g.input(x.clone());
        let w = g.param(&params, "w").unwrap();
        let y = g.matmul(xin, w).unwrap();
        let sq = g.mul(y, y).unwrap();
        let l = g.mean_all(sq);
        let grads = g.backward(l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = max_param_grad_error(loss, &params, &grads, 1e-4, 4, &mut rng);
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut params: ParamSet<f64> = ParamSet::new();
        params.insert("w", array![[2.0]], true).unwrap();
        let loss = |p: &ParamSet<f64>| {
            let w = p.get("w").unwrap().values[[0, 0]];
            w * w
        };
        let mut wrong = GradientMap::new();
        wrong.accumulate("w", &array![[1.0]]); // true gradient is 4
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let err = max_param_grad_error(loss, &params, &wrong, 1e-4, 1, &mut rng);
        assert!(err > 0.5, "expected a large error, got {err}");
    }
}
