//! Dense linear algebra, differentiable primitives, Adam, and a
//! finite-difference gradient oracle.

mod adam;
mod gradcheck;
mod matrix;
mod ops;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use gradcheck::{finite_diff_grad, grad_error_ratio, grads_close};
pub use matrix::{dot, DenseMatrix};
pub use ops::{
    clamped_ln, cross_entropy, cross_entropy_logit_grad, linear_backward, linear_forward, softmax_backward,
    softmax_rows, PROB_EPS,
};
