//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The engine records a graph of [`Var`]s; backward rules are written in terms
//! of the same operations, so gradients can be differentiated again
//! ([`grad`] with `create_graph`). Fused kernels can plug in through
//! [`Function`].

pub mod gradcheck;
mod graph;
pub mod linalg;
mod ops;
pub mod optim;
mod tensor;

pub use graph::{
    backward, grad, is_grad_enabled, no_grad, set_grad_enabled, Function, GradModeGuard,
    Gradients, Var,
};
pub use linalg::{gemm, gemm_raw, ConvGeometry};
pub use ops::{sigmoid, softplus};
pub use optim::{Adam, AdamConfig};
pub use tensor::{broadcast_shapes, Tensor};
