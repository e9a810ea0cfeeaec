use super::DenseMatrix;
use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `at`, one coordinate at a time.
pub fn finite_diff_grad(mut f: impl FnMut(&DenseMatrix) -> f64, at: &DenseMatrix, h: f64) -> Result<DenseMatrix> {
    if !(h > 0.0) {
        return Err(Error::Argument(format!("step h must be positive, got {h}")));
    }
    let mut x = at.clone();
    let mut grad = DenseMatrix::zeros(at.rows(), at.cols());
    for k in 0..at.as_slice().len() {
        let orig = x.as_slice()[k];
        x.as_mut_slice()[k] = orig + h;
        let up = f(&x);
        x.as_mut_slice()[k] = orig - h;
        let down = f(&x);
        x.as_mut_slice()[k] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Evaluation("finite_diff_grad"));
        }
        grad.as_mut_slice()[k] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Largest violation of `|a − n| ≤ atol + rtol·max(|a|, |n|)`, as a ratio
/// of the allowed error (≤ 1 means within tolerance).
pub fn grad_error_ratio(analytic: &DenseMatrix, numeric: &DenseMatrix, rtol: f64, atol: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(a, n)| (a - n).abs() / (atol + rtol * a.abs().max(n.abs())))
        .fold(0.0, f64::max)
}

pub fn grads_close(analytic: &DenseMatrix, numeric: &DenseMatrix, rtol: f64, atol: f64) -> bool {
    grad_error_ratio(analytic, numeric, rtol, atol) <= 1.0
}
