//! Error measures, the oracle bound, NMAE, incoherence diagnostics and the
//! per-trial result record.

mod incoherence;
mod result;

pub use incoherence::{incoherence_diagnostic, incoherence_of_pair, IncoherenceDiagnostic, A2_EXACT_LIMIT, A2_SAMPLES};
pub use result::{ExperimentResult, RECONSTRUCTION_THRESHOLD};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sparse::{observed_frobenius, MatrixLike, ObservedMatrix};

fn check(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<()> {
    if truth.shape() != estimate.shape() {
        return Err(Error::DimensionMismatch {
            expected: truth.shape(),
            found: estimate.shape(),
        });
    }
    Ok(())
}

/// `||M - M^||_F / ||M||_F`.
pub fn rel_error(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<f64> {
    check(truth, estimate)?;
    let norm = truth.norm();
    if norm == 0.0 {
        return Err(Error::degenerate("relative error of a zero matrix"));
    }
    Ok((truth - estimate).norm() / norm)
}

/// `||M - M^||_F / sqrt(m n)`.
pub fn rmse(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<f64> {
    check(truth, estimate)?;
    let (m, n) = truth.shape();
    Ok((truth - estimate).norm() / (m as f64 * n as f64).sqrt())
}

/// `||P_E(M - M^)||_F / ||P_E(M)||_F` with `E` and `P_E(M)` taken from
/// `observed`.
pub fn fit_error<B: MatrixLike + ?Sized>(observed: &ObservedMatrix, estimate: &B) -> Result<f64> {
    let norm = observed.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::degenerate("observed entries are all zero"));
    }
    Ok(observed_frobenius(observed, estimate)? / norm)
}

/// `sigma sqrt((2 n r - r^2) / |E|)`: the error of an estimator that knows
/// the row and column spaces.
pub fn oracle_rmse(n: usize, r: usize, observed: usize, sigma: f64) -> Result<f64> {
    if observed == 0 {
        return Err(Error::degenerate("oracle bound needs at least one observation"));
    }
    let dof = 2.0 * n as f64 * r as f64 - (r * r) as f64;
    Ok(sigma * (dof / observed as f64).sqrt())
}

/// `||P_E(Z)||_F / ||P_E(M)||_F` from values listed in the same order.
pub fn noise_ratio(truth_values: &[f64], noise_values: &[f64]) -> Result<f64> {
    if truth_values.len() != noise_values.len() {
        return Err(Error::DimensionMismatch {
            expected: (truth_values.len(), 1),
            found: (noise_values.len(), 1),
        });
    }
    let m: f64 = truth_values.iter().map(|v| v * v).sum();
    if m == 0.0 {
        return Err(Error::degenerate("noise ratio against a zero signal"));
    }
    let z: f64 = noise_values.iter().map(|v| v * v).sum();
    Ok((z / m).sqrt())
}

/// Mean absolute error over a test set divided by the rating range.
///
/// Both lists must cover the same `(row, col)` positions, in any order.
pub fn nmae(
    predictions: &[((usize, usize), f64)],
    truth: &[((usize, usize), f64)],
    value_min: f64,
    value_max: f64,
) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::degenerate("empty test set"));
    }
    if !(value_max > value_min) {
        return Err(Error::config(format!("rating range [{value_min}, {value_max}] is empty")));
    }
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: (truth.len(), 1),
            found: (predictions.len(), 1),
        });
    }
    let mut p = predictions.to_vec();
    let mut t = truth.to_vec();
    p.sort_by_key(|e| e.0);
    t.sort_by_key(|e| e.0);
    let mut total = 0.0;
    for (a, b) in p.iter().zip(&t) {
        if a.0 != b.0 {
            return Err(Error::Precondition(format!(
                "prediction at {:?} has no matching test entry",
                a.0
            )));
        }
        total += (a.1 - b.1).abs();
    }
    Ok(total / t.len() as f64 / (value_max - value_min))
}
