//! Differentiable primitives: affine map, row softmax and cross-entropy.

use super::DenseMatrix;
use crate::error::{shape_err, Error, Result};

/// Lower clamp applied to every probability before taking a log.
pub const PROB_EPS: f64 = 1e-12;

pub fn clamped_ln(p: f64) -> f64 {
    p.max(PROB_EPS).ln()
}

/// Row-wise softmax, stabilized by subtracting each row's maximum.
pub fn softmax_rows(logits: &DenseMatrix) -> Result<DenseMatrix> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("softmax_rows"));
    }
    logits.check_finite("softmax_rows")?;
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

/// Pulls an upstream gradient w.r.t. softmax outputs back to the logits:
/// `dz = p ⊙ (g − rowsum(p ⊙ g))`.
pub fn softmax_backward(probs: &DenseMatrix, upstream: &DenseMatrix) -> Result<DenseMatrix> {
    upstream.ensure_shape("softmax_backward", probs.rows(), probs.cols())?;
    let mut out = DenseMatrix::zeros(probs.rows(), probs.cols());
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let g = upstream.row(i);
        let inner: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for ((o, &pk), &gk) in out.row_mut(i).iter_mut().zip(p).zip(g) {
            *o = pk * (gk - inner);
        }
    }
    Ok(out)
}

fn check_labels(op: &'static str, probs: &DenseMatrix, labels: &[usize]) -> Result<()> {
    if labels.len() != probs.rows() {
        return Err(shape_err(
            op,
            format!("{} labels for {} rows", labels.len(), probs.rows()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= probs.cols()) {
        return Err(Error::Index {
            op,
            index: bad,
            bound: probs.cols(),
        });
    }
    Ok(())
}

/// Mean negative log-likelihood of `labels` under row distributions `probs`.
pub fn cross_entropy(probs: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    if probs.rows() == 0 {
        return Err(Error::EmptyInput("cross_entropy"));
    }
    check_labels("cross_entropy", probs, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -clamped_ln(probs[(i, y)]))
        .sum();
    Ok(total / labels.len() as f64)
}

/// Gradient of [`cross_entropy`] w.r.t. the logits that produced `probs`
/// through a row softmax: `(p − onehot(y)) / n`. Rows whose target
/// probability sits under the clamp contribute nothing.
pub fn cross_entropy_logit_grad(probs: &DenseMatrix, labels: &[usize]) -> Result<DenseMatrix> {
    if probs.rows() == 0 {
        return Err(Error::EmptyInput("cross_entropy"));
    }
    check_labels("cross_entropy", probs, labels)?;
    let n = labels.len() as f64;
    let mut grad = DenseMatrix::zeros(probs.rows(), probs.cols());
    for (i, &y) in labels.iter().enumerate() {
        if probs[(i, y)] < PROB_EPS {
            continue;
        }
        for (g, &p) in grad.row_mut(i).iter_mut().zip(probs.row(i)) {
            *g = p / n;
        }
        grad[(i, y)] -= 1.0 / n;
    }
    Ok(grad)
}

/// `input · weights + bias`, bias broadcast over rows.
pub fn linear_forward(input: &DenseMatrix, weights: &DenseMatrix, bias: &DenseMatrix) -> Result<DenseMatrix> {
    input.matmul(weights)?.add_row_broadcast(bias)
}

/// Gradients of an affine map: `(d_input, d_weights, d_bias)`.
pub fn linear_backward(
    input: &DenseMatrix,
    weights: &DenseMatrix,
    upstream: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix)> {
    upstream.ensure_shape("linear_backward", input.rows(), weights.cols())?;
    let d_input = upstream.matmul_t(weights)?;
    let d_weights = input.t_matmul(upstream)?;
    Ok((d_input, d_weights, upstream.col_sums()))
}
