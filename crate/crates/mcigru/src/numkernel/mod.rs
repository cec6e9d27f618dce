//! Dense matrix primitives, activations, Adam and a finite-difference
//! gradient checker.
//!
//! Layers in this crate implement their own backward passes against cached
//! forward activations; there is no tape. Everything here is deterministic:
//! reductions run sequentially in index order.

mod activation;
pub mod gradcheck;
mod matrix;
mod param;
mod real;

pub use activation::{
    activation, leaky_relu, leaky_relu_grad, sigmoid, softmax_backward_slice, softmax_rows,
    softmax_slice, Activation,
};
pub use gradcheck::{finite_diff_check, GradCheckOptions, GradCheckReport};
pub use matrix::{axpy, dot, Matrix};
pub use param::{adam_step, AdamConfig, ParamTensor, Parameterized};
pub use real::{Precision, Real};
