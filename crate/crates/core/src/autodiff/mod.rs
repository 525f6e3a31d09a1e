//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
mod graph;
mod optim;
mod tensor;

pub use gradcheck::{analytic_gradients, grad_check, grad_check_many, numeric_gradients};
pub use graph::{Gradients, Graph, NodeId, Op};
pub use optim::{Optimizer, OptimizerKind, OptimizerSpec};
pub use tensor::Tensor;

pub(crate) use tensor::dot;
