//! Minimal reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Tape`] owns every node created during a forward pass. Nodes are
//! appended in creation order, so parents always precede children and the
//! backward sweep simply walks the node list in reverse.
//!
//! Broadcasting is limited to a leading batch dimension: `add(a, b)` accepts
//! `b.shape == a.shape[1..]`.

mod tape;
mod tensor;

pub use tape::{NodeId, Tape};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("gather: index {index} out of range for table with {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("concat: empty input list")]
    EmptyConcat,
}
