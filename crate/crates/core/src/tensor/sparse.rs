use super::{Result, Tensor, TensorError};

/// Sparse matrix stored as a coordinate list sorted by row.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(r, c, _) in &entries {
            if r >= n_rows || c >= n_cols {
                return Err(TensorError::Invalid(format!(
                    "sparse entry ({r},{c}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            entries,
        })
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// y = A x for dense x of shape [n_cols, d] (or [n_cols]).
    pub fn matmul(&self, x: &Tensor) -> Tensor {
        let d = if x.shape().len() == 2 {
            x.shape()[1]
        } else {
            1
        };
        let mut out = vec![0.0; self.n_rows * d];
        for &(r, c, v) in &self.entries {
            let src = &x.data()[c * d..(c + 1) * d];
            let dst = &mut out[r * d..(r + 1) * d];
            for k in 0..d {
                dst[k] += v * src[k];
            }
        }
        if x.shape().len() == 2 {
            Tensor::new(vec![self.n_rows, d], out).unwrap()
        } else {
            Tensor::vector(out)
        }
    }

    /// y = Aᵀ x; used by the backward pass.
    pub fn matmul_transpose(&self, x: &Tensor) -> Tensor {
        let d = if x.shape().len() == 2 {
            x.shape()[1]
        } else {
            1
        };
        let mut out = vec![0.0; self.n_cols * d];
        for &(r, c, v) in &self.entries {
            let src = &x.data()[r * d..(r + 1) * d];
            let dst = &mut out[c * d..(c + 1) * d];
            for k in 0..d {
                dst[k] += v * src[k];
            }
        }
        if x.shape().len() == 2 {
            Tensor::new(vec![self.n_cols, d], out).unwrap()
        } else {
            Tensor::vector(out)
        }
    }
}

/// Fixed sparsity pattern whose per-edge values are a differentiable tensor.
/// Backs attention-weighted aggregation: out[row] += value[e] * x[col].
#[derive(Debug, Clone)]
pub struct EdgePattern {
    pub n_rows: usize,
    pub n_cols: usize,
    pub edges: Vec<(usize, usize)>,
}

impl EdgePattern {
    pub fn new(n_rows: usize, n_cols: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        for &(r, c) in &edges {
            if r >= n_rows || c >= n_cols {
                return Err(TensorError::Invalid(format!(
                    "edge ({r},{c}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        Ok(EdgePattern {
            n_rows,
            n_cols,
            edges,
        })
    }
}
