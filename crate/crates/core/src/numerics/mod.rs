//! Tensor arithmetic and reverse-mode differentiation.

mod graph;
mod tensor;

pub use graph::{concat, leaky_relu, sigmoid, softplus, Graph, Var, LEAKY_SLOPE};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("grad: output must be a scalar, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
}
