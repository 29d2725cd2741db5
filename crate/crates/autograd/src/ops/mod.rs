//! Differentiable operations, implemented as methods on [`Var`](crate::Var).

pub mod conv;
mod elementwise;
mod linalg;
mod reduce;
mod shape;
mod softmax;

pub use elementwise::{gelu, gelu_grad, sigmoid, softplus};
pub use linalg::{gemm_into, matmul_t};
