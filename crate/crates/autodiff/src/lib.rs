//! Reverse-mode differentiation over batched dense real tensors.
//!
//! Every tensor has three axes, `batch × rows × cols`. Binary elementwise
//! operations and matrix products broadcast any axis of size one, which is
//! how shared parameters (`batch = 1`) act on a whole mini-batch.
//!
//! ```
//! use cfisac_autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::from_vec([1, 1, 2], vec![3.0, -1.0]).unwrap());
//! let y = g.square(x);
//! let loss = g.sum_all(y);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap().data(), &[6.0, -2.0]);
//! ```

mod adam;
mod graph;
mod tensor;

pub mod check;

pub use adam::{Adam, AdamConfig};
pub use graph::{Graph, Var, LAYER_NORM_EPS};
pub use tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShapeError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Incompatible {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Shape, len: usize },
    #[error("slice {start}..{start}+{len} out of range for {shape:?}")]
    Slice {
        shape: Shape,
        start: usize,
        len: usize,
    },
    #[error("cannot split {shape:?} into {parts} equal column blocks")]
    Split { shape: Shape, parts: usize },
    #[error("axis {0} out of range")]
    Axis(usize),
    #[error("{0}: no operands")]
    Empty(&'static str),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Shape),
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
}
