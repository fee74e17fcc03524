//! Dense `f64` arrays with a tape-based reverse-mode differentiator.
//!
//! Every primitive records its inputs on a [`Tape`]; [`Tape::backward`] walks
//! the tape in reverse creation order and accumulates gradients over fan-out.
//! Elementwise binary ops broadcast only scalar (one-element) operands.
//! Tapes are single-threaded (`!Sync`); distinct tapes share no state.

mod array;
mod gradcheck;
mod tape;

pub use array::Tensor;
pub use gradcheck::grad_check;
pub use tape::{Gradients, Tape, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("data of length {len} does not fill shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("expected a single value, got shape {shape:?}")]
    NonScalar { shape: Vec<usize> },
    #[error("{0}")]
    InvalidArgument(String),
}
