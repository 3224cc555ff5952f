use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sparse::{MatrixLike, ObservedMatrix};

/// Maximum `|X^T X / m - I|` entry accepted as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// A point `(X, Y)` on `G(m, r) x G(n, r)`, represented with the scaling
/// `X^T X = m I`, `Y^T Y = n I`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
}

fn normalization_error(a: &DMatrix<f64>) -> f64 {
    let scale = a.nrows() as f64;
    let gram = a.transpose() * a / scale;
    (gram - DMatrix::identity(a.ncols(), a.ncols())).amax()
}

impl FactorPair {
    /// Accepts already-normalized factors.
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        let r = x.ncols();
        if r == 0 || y.ncols() != r {
            return Err(Error::DimensionMismatch {
                expected: (y.nrows(), r),
                found: y.shape(),
            });
        }
        if r > x.nrows() || r > y.nrows() {
            return Err(Error::config(format!(
                "rank {r} exceeds a factor dimension ({} or {})",
                x.nrows(),
                y.nrows()
            )));
        }
        let dev = normalization_error(&x).max(normalization_error(&y));
        if !(dev <= NORMALIZATION_TOL) {
            return Err(Error::Precondition(format!(
                "factors are not normalized (max Gram deviation {dev:e})"
            )));
        }
        Ok(Self { x, y })
    }


    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn rank(&self) -> usize {
        self.x.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.x.nrows(), self.y.nrows())
    }

    /// Largest deviation of `X^T X / m` or `Y^T Y / n` from the identity.
    pub fn normalization_error(&self) -> f64 {
        normalization_error(&self.x).max(normalization_error(&self.y))
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.x, self.y)
    }
}

fn orthonormalize(raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, r) = raw.shape();
    if r == 0 || r > rows {
        return Err(Error::degenerate(format!("cannot orthonormalize a {rows}x{r} block")));
    }
    let qr = raw.clone().qr();
    let mut q = qr.q();
    let rfac = qr.r();
    let largest = (0..r).map(|k| rfac[(k, k)].abs()).fold(0.0, f64::max);
    for k in 0..r {
        let d = rfac[(k, k)];
        if !(d.abs() > 1e-10 * largest) {
            return Err(Error::degenerate(format!("factor block is rank deficient (column {k})")));
        }
        if d < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    Ok(q * (rows as f64).sqrt())
}

/// Maps raw blocks back onto the manifold: thin QR with a non-negative
/// `R` diagonal, then rescaling so `X^T X = m I` and `Y^T Y = n I`.
pub fn retract(x_raw: &DMatrix<f64>, y_raw: &DMatrix<f64>) -> Result<FactorPair> {
    if x_raw.ncols() != y_raw.ncols() {
        return Err(Error::DimensionMismatch {
            expected: (y_raw.nrows(), x_raw.ncols()),
            found: y_raw.shape(),
        });
    }
    Ok(FactorPair {
        x: orthonormalize(x_raw)?,
        y: orthonormalize(y_raw)?,
    })
}

/// The estimate `X S Y^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTriple {
    pub factors: FactorPair,
    pub core: DMatrix<f64>,
}

impl FactorTriple {
    pub fn new(factors: FactorPair, core: DMatrix<f64>) -> Result<Self> {
        let r = factors.rank();
        if core.shape() != (r, r) {
            return Err(Error::DimensionMismatch {
                expected: (r, r),
                found: core.shape(),
            });
        }
        Ok(Self { factors, core })
    }

    pub fn rank(&self) -> usize {
        self.factors.rank()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        self.factors.x()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        self.factors.y()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.x() * &self.core * self.y().transpose()
    }
}

impl MatrixLike for FactorTriple {
    fn dims(&self) -> (usize, usize) {
        self.factors.dims()
    }

    fn entry(&self, row: usize, col: usize) -> f64 {
        let xs = self.x().row(row) * &self.core;
        xs.dot(&self.y().row(col))
    }

    fn values_on(&self, pattern: &ObservedMatrix) -> Vec<f64> {
        // rows of X S and Y as contiguous columns
        let xs_t = (self.x() * &self.core).transpose();
        let y_t = self.y().transpose();
        pattern
            .iter()
            .map(|(i, j, _)| xs_t.column(i).dot(&y_t.column(j)))
            .collect()
    }
}
