use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::manifold::FactorPair;
use crate::rng::{stream, Stream};

/// Largest `m * n` for which the cross-incoherence statistic is exact.
pub const A2_EXACT_LIMIT: usize = 20_000_000;
/// Random `(i, j)` pairs inspected above [`A2_EXACT_LIMIT`].
pub const A2_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct IncoherenceDiagnostic {
    /// `sum_{i <= k} x_(i)` over the ascending scaled row norms
    /// `x_i = (m / r) ||U^(i)||^2`; ends at `m`.
    pub cumulative_left: Vec<f64>,
    /// Same for the right factor; ends at `n`.
    pub cumulative_right: Vec<f64>,
    /// `max_ij |sum_k U_ik V_jk| sqrt(m n / r)`.
    pub a2_max: f64,
    /// `a2_max` is a maximum over sampled pairs rather than all of them.
    pub a2_sampled: bool,
}

impl IncoherenceDiagnostic {
    /// Largest scaled row norm of either factor, the tightest `mu_0` in A1.
    pub fn mu_a1(&self) -> f64 {
        let step = |c: &[f64]| match c {
            [] => 0.0,
            [x] => *x,
            [.., a, b] => b - a,
        };
        step(&self.cumulative_left).max(step(&self.cumulative_right))
    }
}

fn check_orthonormal(block: &DMatrix<f64>, name: &str) -> Result<()> {
    let r = block.ncols();
    let gram = block.transpose() * block;
    let dev = (gram - DMatrix::<f64>::identity(r, r)).amax();
    if dev > 1e-8 {
        return Err(Error::Precondition(format!(
            "{name} factor is not column-orthonormal (Gram deviation {dev:e})"
        )));
    }
    Ok(())
}

fn cumulative_row_norms(block: &DMatrix<f64>) -> Vec<f64> {
    let (m, r) = block.shape();
    let scale = m as f64 / r as f64;
    let mut x: Vec<f64> = block.row_iter().map(|row| scale * row.norm_squared()).collect();
    x.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    x.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Row-norm profile and cross-incoherence of column-orthonormal factors
/// `U` (`m x r`) and `V` (`n x r`).
///
/// The cross statistic is exact up to [`A2_EXACT_LIMIT`] pairs and sampled
/// from `seed` beyond it.
pub fn incoherence_diagnostic(left: &DMatrix<f64>, right: &DMatrix<f64>, seed: u64) -> Result<IncoherenceDiagnostic> {
    let (m, r) = left.shape();
    let (n, r2) = right.shape();
    if r != r2 || r == 0 {
        return Err(Error::DimensionMismatch {
            expected: (n, r),
            found: (n, r2),
        });
    }
    check_orthonormal(left, "left")?;
    check_orthonormal(right, "right")?;
    let scale = (m as f64 * n as f64 / r as f64).sqrt();
    let u_t = left.transpose();
    let v_t = right.transpose();
    let sampled = m.saturating_mul(n) > A2_EXACT_LIMIT;
    let mut a2 = 0.0f64;
    if sampled {
        let mut rng = stream(seed, Stream::Diagnostics);
        for _ in 0..A2_SAMPLES {
            let i = rng.random_range(0..m);
            let j = rng.random_range(0..n);
            a2 = a2.max(u_t.column(i).dot(&v_t.column(j)).abs());
        }
    } else {
        for i in 0..m {
            let row = right * u_t.column(i);
            a2 = a2.max(row.amax());
        }
    }
    Ok(IncoherenceDiagnostic {
        cumulative_left: cumulative_row_norms(left),
        cumulative_right: cumulative_row_norms(right),
        a2_max: a2 * scale,
        a2_sampled: sampled,
    })
}

/// [`incoherence_diagnostic`] of a manifold point, rescaled to unit columns.
pub fn incoherence_of_pair(pair: &FactorPair, seed: u64) -> Result<IncoherenceDiagnostic> {
    let (m, n) = pair.dims();
    incoherence_diagnostic(&(pair.x() / (m as f64).sqrt()), &(pair.y() / (n as f64).sqrt()), seed)
}
