//! Checks the analytic gradients of the clustering loss against central
//! finite differences on a small random instance and prints the worst
//! error ratio per parameter (≤ 1 means within tolerance).
//!
//!     cargo run --example gradient_check

use cluster_ssl::clustering::{cm_loss, cm_loss_grads, encode, reconstruct, ClusteringModuleState};
use cluster_ssl::math::{finite_diff_grad, grad_error_ratio, DenseMatrix};
use cluster_ssl::SeededRng;

const RTOL: f64 = 1e-4;
const ATOL: f64 = 1e-8;
const H: f64 = 1e-5;

fn loss(x: &DenseMatrix, state: &ClusteringModuleState, alpha: &[f64]) -> f64 {
    let gamma = encode(x, state).unwrap();
    let x_bar = reconstruct(&gamma, &state.centroids).unwrap();
    cm_loss(x, &gamma, &x_bar, &state.centroids, alpha).unwrap().total
}

fn main() -> cluster_ssl::Result<()> {
    let mut rng = SeededRng::new(7);
    let (n, d, k) = (5, 3, 3);
    let x = DenseMatrix::uniform(n, d, -2.0, 2.0, &mut rng);
    let mut state = ClusteringModuleState::new(d, k, &mut rng);
    state.centroids = DenseMatrix::uniform(k, d, -2.0, 2.0, &mut rng);
    state.encoder_bias = DenseMatrix::uniform(1, k, -0.5, 0.5, &mut rng);
    // α ≠ 1 switches on the Dirichlet term
    let alpha = [1.5, 1.0, 2.0];

    let (breakdown, grads) = cm_loss_grads(&x, &state, &alpha)?;
    println!("loss terms: {breakdown:?}");

    let fd_x = finite_diff_grad(|m| loss(m, &state, &alpha), &x, H)?;
    let fd_w = finite_diff_grad(
        |m| {
            let mut s = state.clone();
            s.encoder_weights = m.clone();
            loss(&x, &s, &alpha)
        },
        &state.encoder_weights,
        H,
    )?;
    let fd_b = finite_diff_grad(
        |m| {
            let mut s = state.clone();
            s.encoder_bias = m.clone();
            loss(&x, &s, &alpha)
        },
        &state.encoder_bias,
        H,
    )?;
    for (name, analytic, numeric) in [
        ("features", &grads.features, &fd_x),
        ("encoder weights", &grads.encoder_weights, &fd_w),
        ("encoder bias", &grads.encoder_bias, &fd_b),
    ] {
        let ratio = grad_error_ratio(analytic, numeric, RTOL, ATOL);
        println!(
            "{name:<16} error ratio {ratio:.3e}  {}",
            if ratio <= 1.0 { "ok" } else { "MISMATCH" }
        );
    }
    Ok(())
}
