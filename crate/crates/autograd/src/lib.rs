//! Reverse-mode automatic differentiation over dense row-major tensors.

mod graph;
mod param;
mod scalar;
mod tensor;

pub mod gradcheck;
pub mod ops;

pub use graph::{BackwardFn, Gradients, Graph, Var};
pub use ops::conv::{Conv2dSpec, PadMode};
pub use param::{
    join_name, named_params, param_checksum, param_count, set_trainable, Module, Param, ParamId,
};
pub use scalar::Float;
pub use tensor::{broadcast_shapes, contiguous_strides, numel, Tensor};
