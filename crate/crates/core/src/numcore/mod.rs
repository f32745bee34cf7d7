//! Dense tensors, activations, seeded randomness and a finite-difference
//! gradient harness.

mod fastmath;
mod gradcheck;
mod ops;
mod prng;
mod scalar;
mod tensor;

pub use gradcheck::{finite_difference_grad, max_relative_error};
pub use ops::{
    gelu, gelu_grad_scalar, gelu_scalar, matmul, sigmoid, sigmoid_scalar, softmax_in_place,
    softmax_lastdim,
};
pub use prng::Prng;
pub use scalar::{gemm, MatRef, Scalar};
pub use tensor::Tensor;
