use nalgebra::DMatrix;

use super::ObservedMatrix;
use crate::error::{Error, Result};

/// A real `m x n` operator known only through products with vectors.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// `y = A x`; `x` has length `ncols`, `y` has length `nrows`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// `y = A^T x`; `x` has length `nrows`, `y` has length `ncols`.
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for ObservedMatrix {
    fn nrows(&self) -> usize {
        self.shape().rows()
    }

    fn ncols(&self) -> usize {
        self.shape().cols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let cols = self.col_indices();
        let vals = self.values();
        for (i, out) in y.iter_mut().enumerate() {
            *out = self.row_range(i).map(|e| vals[e] * x[cols[e]]).sum();
        }
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (i, j, v) in self.iter() {
            y[j] += v * x[i];
        }
    }
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (j, col) in self.column_iter().enumerate() {
            let xj = x[j];
            for (out, a) in y.iter_mut().zip(col.iter()) {
                *out += a * xj;
            }
        }
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        for (out, col) in y.iter_mut().zip(self.column_iter()) {
            *out = col.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// `A - c * L S R^T` for a sparse `A` and a thin low-rank term, applied
/// without ever forming the dense difference.
///
/// One product costs one sparse pass plus two thin dense passes.
#[derive(Debug, Clone, Copy)]
pub struct LowRankResidual<'a> {
    sparse: &'a ObservedMatrix,
    left: &'a DMatrix<f64>,
    core: &'a DMatrix<f64>,
    right: &'a DMatrix<f64>,
    scale: f64,
}

impl<'a> LowRankResidual<'a> {
    pub fn new(
        sparse: &'a ObservedMatrix,
        left: &'a DMatrix<f64>,
        core: &'a DMatrix<f64>,
        right: &'a DMatrix<f64>,
    ) -> Result<Self> {
        let (m, n) = sparse.shape().dims();
        let r = core.nrows();
        if left.nrows() != m || left.ncols() != r {
            return Err(Error::DimensionMismatch {
                expected: (m, r),
                found: left.shape(),
            });
        }
        if right.nrows() != n || right.ncols() != core.ncols() {
            return Err(Error::DimensionMismatch {
                expected: (n, core.ncols()),
                found: right.shape(),
            });
        }
        Ok(Self {
            sparse,
            left,
            core,
            right,
            scale: 1.0,
        })
    }

    /// Multiplies the low-rank term by `scale` before subtracting it.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.sparse.to_dense() - (self.left * self.core * self.right.transpose()) * self.scale
    }
}

fn thin_product(outer: &DMatrix<f64>, core: &DMatrix<f64>, inner: &DMatrix<f64>, x: &[f64], scale: f64, y: &mut [f64]) {
    // y -= scale * outer * core * inner^T x
    let mut t = vec![0.0; inner.ncols()];
    inner.apply_transpose(x, &mut t);
    let mut s = vec![0.0; core.nrows()];
    core.apply(&t, &mut s);
    for (k, col) in outer.column_iter().enumerate() {
        let c = scale * s[k];
        for (out, a) in y.iter_mut().zip(col.iter()) {
            *out -= a * c;
        }
    }
}

impl LinearOperator for LowRankResidual<'_> {
    fn nrows(&self) -> usize {
        self.sparse.nrows()
    }

    fn ncols(&self) -> usize {
        self.sparse.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.sparse.apply(x, y);
        thin_product(self.left, self.core, self.right, x, self.scale, y);
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        self.sparse.apply_transpose(x, y);
        let core_t = self.core.transpose();
        thin_product(self.right, &core_t, self.left, x, self.scale, y);
    }
}
