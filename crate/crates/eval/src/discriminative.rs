//! Post-hoc discriminative score: a small recurrent binary classifier is
//! trained to tell real windows from synthetic ones; the score is
//! `|test accuracy - 0.5|`, so 0 means indistinguishable and 0.5 means fully
//! separable.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use comets_nn::{Adam, AdamConfig, Graph, Mode, ParamSet, Var};

use crate::error::{EvalError, Result};

/// Number of optimizer steps for the classifier.
pub const DISCRIMINATIVE_TRAIN_STEPS: usize = 500;
/// Minimum windows per class.
pub const MIN_WINDOWS_PER_SIDE: usize = 20;

/// Train the classifier on an 80/20 stratified split and return
/// `|test accuracy - 0.5|`, deterministic in `seed`.
///
/// Real windows are labelled 1, synthetic windows 0. All windows must share
/// one `(T, C)` shape and each side must supply at least
/// [`MIN_WINDOWS_PER_SIDE`] windows.
pub fn discriminative_score(
    real: &[Array2<f64>],
    synthetic: &[Array2<f64>],
    seed: u64,
) -> Result<f64> {
    if real.len() < MIN_WINDOWS_PER_SIDE || synthetic.len() < MIN_WINDOWS_PER_SIDE {
        return Err(EvalError::Insufficient(format!(
            "discriminative score needs >= {MIN_WINDOWS_PER_SIDE} windows per side, got {} real and {} synthetic",
            real.len(),
            synthetic.len()
        )));
    }
    let (t_len, c) = real[0].dim();
    if t_len == 0 || c == 0 {
        return Err(EvalError::InvalidSpec("windows must be non-empty".into()));
    }
    for w in real.iter().chain(synthetic) {
        if w.dim() != (t_len, c) {
            return Err(EvalError::InvalidSpec(format!(
                "window shapes differ: ({t_len}, {c}) vs ({}, {})",
                w.nrows(),
                w.ncols()
            )));
        }
    }
    let hidden = (c / 2).max(8);

    let mut split_rng = comets_core::rng::substream(seed, "eval.disc.split");
    let (real_train, real_test) = stratified_split(real.len(), &mut split_rng);
    let (syn_train, syn_test) = stratified_split(synthetic.len(), &mut split_rng);
    for (part, name) in [
        (&real_train, "real train"),
        (&real_test, "real test"),
        (&syn_train, "synthetic train"),
        (&syn_test, "synthetic test"),
    ] {
        if part.is_empty() {
            return Err(EvalError::Imbalance(format!("{name} split is empty")));
        }
    }

    let (train_x, train_y) = stack_windows(real, &real_train, synthetic, &syn_train, t_len, c);
    let (test_x, test_y) = stack_windows(real, &real_test, synthetic, &syn_test, t_len, c);
    let train_b = train_y.nrows();
    let test_b = test_y.nrows();

    let mut init_rng = comets_core::rng::substream(seed, "eval.disc.init");
    let mut params = init_classifier(c, hidden, &mut init_rng)?;
    let mut adam = Adam::new(AdamConfig::default());

    for step in 0..DISCRIMINATIVE_TRAIN_STEPS {
        let mut g: Graph<f64> = Graph::new(Mode::Train);
        let p = forward(&mut g, &params, train_x.clone(), train_b, t_len, hidden)?;
        let y = g.input(train_y.clone());
        let d = g.sub(p, y)?;
        let sq = g.mul(d, d)?;
        let loss = g.mean_all(sq);
        let loss_val = g.value(loss)[[0, 0]];
        if !loss_val.is_finite() {
            return Err(EvalError::NonFinite(format!(
                "classifier loss became {loss_val} at step {step}"
            )));
        }
        let grads = g.backward(loss)?;
        adam.step(&mut params, &grads, "disc.")?;
    }

    let mut g: Graph<f64> = Graph::new(Mode::Eval);
    let p = forward(&mut g, &params, test_x, test_b, t_len, hidden)?;
    let preds = g.value(p);
    let mut correct = 0usize;
    for r in 0..test_b {
        let predicted = preds[[r, 0]] >= 0.5;
        let actual = test_y[[r, 0]] >= 0.5;
        if predicted == actual {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / test_b as f64;
    Ok((accuracy - 0.5).abs())
}

/// Shuffle `0..n` and split 80/20.
fn stratified_split(n: usize, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let cut = n * 8 / 10;
    (idx[..cut].to_vec(), idx[cut..].to_vec())
}

/// Stack selected real then synthetic windows into one `(B * T, C)` matrix
/// with a `(B, 1)` label column (real = 1).
fn stack_windows(
    real: &[Array2<f64>],
    real_idx: &[usize],
    synthetic: &[Array2<f64>],
    syn_idx: &[usize],
    t_len: usize,
    c: usize,
) -> (Array2<f64>, Array2<f64>) {
    let b = real_idx.len() + syn_idx.len();
    let mut x = Array2::zeros((b * t_len, c));
    let mut y = Array2::zeros((b, 1));
    for (row, (&src, label)) in real_idx
        .iter()
        .map(|i| (i, 1.0))
        .chain(syn_idx.iter().map(|i| (i, 0.0)))
        .enumerate()
    {
        let window = if label > 0.5 { &real[src] } else { &synthetic[src] };
        x.slice_mut(ndarray::s![row * t_len..(row + 1) * t_len, ..])
            .assign(window);
        y[[row, 0]] = label;
    }
    (x, y)
}

/// One-layer LSTM cell plus a sigmoid read-out head. Gate order i, f, o, g;
/// the forget-gate bias starts at 1 so early cell state is retained.
fn init_classifier(c: usize, hidden: usize, rng: &mut impl Rng) -> Result<ParamSet<f64>> {
    let mut params = ParamSet::new();
    fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
        let limit = (3.0 / fan_in as f64).sqrt();
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
    }
    params.insert("disc.wx", uniform(rng, c, 4 * hidden, c), true)?;
    params.insert("disc.wh", uniform(rng, hidden, 4 * hidden, hidden), true)?;
    let mut bias = Array2::zeros((1, 4 * hidden));
    for j in hidden..2 * hidden {
        bias[[0, j]] = 1.0;
    }
    params.insert("disc.b", bias, true)?;
    params.insert("disc.out.w", uniform(rng, hidden, 1, hidden), true)?;
    params.insert("disc.out.b", Array2::zeros((1, 1)), true)?;
    Ok(params)
}

fn forward(
    g: &mut Graph<f64>,
    params: &ParamSet<f64>,
    x: Array2<f64>,
    batch: usize,
    t_len: usize,
    hidden: usize,
) -> Result<Var> {
    let x = g.input(x);
    let wx = g.param(params, "disc.wx")?;
    let wh = g.param(params, "disc.wh")?;
    let b = g.param(params, "disc.b")?;
    let w_out = g.param(params, "disc.out.w")?;
    let b_out = g.param(params, "disc.out.b")?;
    let mut h = g.input(Array2::zeros((batch, hidden)));
    let mut cell = g.input(Array2::zeros((batch, hidden)));
    for t in 0..t_len {
        let xt = g.slice_rows(x, batch, t, t + 1)?;
        let from_x = g.matmul(xt, wx)?;
        let from_h = g.matmul(h, wh)?;
        let pre = g.add(from_x, from_h)?;
        let gates = g.add_row(pre, b)?;
        let i_gate = g.slice_cols(gates, 0, hidden)?;
        let f_gate = g.slice_cols(gates, hidden, 2 * hidden)?;
        let o_gate = g.slice_cols(gates, 2 * hidden, 3 * hidden)?;
        let g_gate = g.slice_cols(gates, 3 * hidden, 4 * hidden)?;
        let i_gate = g.sigmoid(i_gate);
        let f_gate = g.sigmoid(f_gate);
        let o_gate = g.sigmoid(o_gate);
        let g_gate = g.tanh(g_gate);
        let keep = g.mul(f_gate, cell)?;
        let write = g.mul(i_gate, g_gate)?;
        cell = g.add(keep, write)?;
        let cell_act = g.tanh(cell);
        h = g.mul(o_gate, cell_act)?;
    }
    let logits = g.matmul(h, w_out)?;
    let logits = g.add_row(logits, b_out)?;
    Ok(g.sigmoid(logits))
}
