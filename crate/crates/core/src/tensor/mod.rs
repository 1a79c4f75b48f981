//! Minimal dense-tensor engine with reverse-mode automatic differentiation.
//!
//! Graphs are built once (define-then-run), evaluated against named input
//! bindings, and differentiated by walking the node list in reverse. All
//! storage is 64-bit; lemma-level identity checks need tolerances that f32
//! cannot reach.

mod fdcheck;
mod graph;
mod sparse;
#[cfg(test)]
mod tests;

pub use fdcheck::{finite_diff_check, FdCheckReport, FdCoordReport};
pub use graph::{EvalMode, Evaluation, Gradients, Graph, NodeId, Op};
pub use sparse::{EdgePattern, SparseMatrix};

use thiserror::Error;

/// Clamp bound for artanh inputs; ball-boundary round-off otherwise
/// produces Inf.
pub const ARTANH_CLAMP: f64 = 1.0 - 1e-15;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch at node {node} ({op}): {details}")]
    ShapeMismatch {
        node: usize,
        op: &'static str,
        details: String,
    },
    #[error("non-finite output at node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("unbound input `{0}`")]
    UnboundInput(String),
    #[error("input `{name}` bound with shape {got:?}, declared {want:?}")]
    BadBinding {
        name: String,
        got: Vec<usize>,
        want: Vec<usize>,
    },
    #[error("backward seed must be a scalar, node has shape {0:?}")]
    NonScalarSeed(Vec<usize>),
    #[error("invalid tensor: shape {shape:?} holds {len} values")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major tensor of rank 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() || shape.is_empty() || shape.len() > 2 {
            return Err(TensorError::BadShape {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(v: Vec<f64>) -> Self {
        Tensor {
            shape: vec![v.len()],
            data: v,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Logical row count; rank-1 tensors are a single row.
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Logical column count (length of the last axis).
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn artanh(x: f64) -> f64 {
    let x = x.clamp(-ARTANH_CLAMP, ARTANH_CLAMP);
    x.atanh()
}
