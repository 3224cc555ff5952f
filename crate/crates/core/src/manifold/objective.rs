//! The cost `F(X, Y) = min_S F(X, Y, S)` with squared-difference element
//! cost, its exact inner minimization over `S`, and its gradient.
//!
//! ```text
//! F(X, Y, S) = 1/2 ||P_E(M - X S Y^T)||_F^2 + lambda/2 ||P_{E^c}(X S Y^T)||_F^2
//! ```

use nalgebra::DMatrix;

use super::{FactorPair, FactorTriple};
use crate::error::{Error, Result};
use crate::sparse::ObservedMatrix;

#[derive(Debug, Clone)]
pub struct CoreSolution {
    pub core: DMatrix<f64>,
    /// The normal system was singular; `core` is its minimum-norm solution.
    pub rank_deficient: bool,
    /// `r^2 > |E|`: fewer equations than unknowns.
    pub underdetermined: bool,
}

#[derive(Debug, Clone)]
pub struct CostEval {
    /// `F(X, Y)`.
    pub value: f64,
    /// The minimizing core `S`.
    pub core: DMatrix<f64>,
    /// `||P_E(M - X S Y^T)||_F^2`, without the regularization term.
    pub observed_residual_sq: f64,
    pub rank_deficient: bool,
}

/// A tangent vector `(W_X, W_Y)` at a factor pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl TangentVector {
    /// `||W_X||_F^2 + ||W_Y||_F^2`.
    pub fn norm_sq(&self) -> f64 {
        self.x.norm_squared() + self.y.norm_squared()
    }

    pub fn inner(&self, other: &TangentVector) -> f64 {
        self.x.dot(&other.x) + self.y.dot(&other.y)
    }

    /// Removes the components along the current subspaces:
    /// `W_X - X (X^T W_X) / m`, and likewise for `Y`.
    pub fn project_to_tangent(&self, at: &FactorPair) -> TangentVector {
        let (m, n) = at.dims();
        let x = &self.x - at.x() * (at.x().transpose() * &self.x) / m as f64;
        let y = &self.y - at.y() * (at.y().transpose() * &self.y) / n as f64;
        TangentVector { x, y }
    }
}

fn check_shapes(observed: &ObservedMatrix, factors: &FactorPair) -> Result<()> {
    observed.shape().check(factors.dims())?;
    if observed.is_empty() {
        return Err(Error::degenerate("no observed entries (epsilon = 0)"));
    }
    Ok(())
}

// Symmetric normal matrix of the least-squares problem in vec(S), with
// vec taken column-major so that (X S Y^T)_ij = (y_j (x) x_i) . vec(S).
fn observed_normal_matrix(observed: &ObservedMatrix, x_t: &DMatrix<f64>, y_t: &DMatrix<f64>) -> DMatrix<f64> {
    let r = x_t.nrows();
    let rr = r * r;
    let mut g = DMatrix::<f64>::zeros(rr, rr);
    let mut c = DMatrix::<f64>::zeros(r, r);
    let rows = observed.row_indices();
    for j in 0..observed.ncols() {
        let entries = observed.col_entries(j);
        if entries.is_empty() {
            continue;
        }
        // C_j = sum_{i in column j} x_i x_i^T (upper triangle)
        c.fill(0.0);
        for &e in entries {
            let xi = x_t.column(rows[e]);
            for q in 0..r {
                let xq = xi[q];
                for p in 0..=q {
                    c[(p, q)] += xi[p] * xq;
                }
            }
        }
        for q in 0..r {
            for p in 0..q {
                c[(q, p)] = c[(p, q)];
            }
        }
        let yj = y_t.column(j);
        // block (b, d) of G gains y_j[b] y_j[d] C_j; fill b <= d
        for d in 0..r {
            for b in 0..=d {
                let w = yj[b] * yj[d];
                if w == 0.0 {
                    continue;
                }
                for cc in 0..r {
                    let col = cc + d * r;
                    for a in 0..r {
                        g[(a + b * r, col)] += w * c[(a, cc)];
                    }
                }
            }
        }
    }
    for d in 0..r {
        for b in 0..d {
            for cc in 0..r {
                for a in 0..r {
                    g[(a + d * r, cc + b * r)] = g[(cc + b * r, a + d * r)];
                }
            }
        }
    }
    g
}

// X^T P_E(M) Y as an r x r matrix.
fn observed_rhs(observed: &ObservedMatrix, x: &DMatrix<f64>, y_t: &DMatrix<f64>) -> DMatrix<f64> {
    let r = y_t.nrows();
    let mut t_t = DMatrix::<f64>::zeros(r, observed.nrows());
    for (i, j, v) in observed.iter() {
        let mut col = t_t.column_mut(i);
        col.axpy(v, &y_t.column(j), 1.0);
    }
    // (X^T T)[a, b] = sum_i X[i, a] T[i, b]
    x.transpose() * t_t.transpose()
}

fn solve_symmetric(a: DMatrix<f64>, b: &[f64]) -> (Vec<f64>, bool) {
    let n = a.nrows();
    let rhs = nalgebra::DVector::from_column_slice(b);
    if let Some(chol) = a.clone().cholesky() {
        let l = chol.l_dirty();
        let diag: Vec<f64> = (0..n).map(|k| l[(k, k)]).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        // squared ratio of L's diagonal bounds the conditioning of A
        if max > 0.0 && (min / max).powi(2) > 1e-13 {
            return (chol.solve(&rhs).as_slice().to_vec(), false);
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (smax * 1e-12).max(f64::MIN_POSITIVE);
    let sol = svd.solve(&rhs, eps).expect("both singular bases were computed");
    (sol.as_slice().to_vec(), true)
}

/// The core `S` minimizing `F(X, Y, S)` for fixed factors.
///
/// Builds the `r^2 x r^2` normal system of the observed-entry least squares in
/// `O(|E| r^2 + n r^4)` and solves it densely; a singular system yields the
/// minimum-norm solution with `rank_deficient` set.
pub fn solve_core(observed: &ObservedMatrix, factors: &FactorPair, lambda: f64) -> Result<CoreSolution> {
    check_shapes(observed, factors)?;
    let r = factors.rank();
    let x_t = factors.x().transpose();
    let y_t = factors.y().transpose();
    let mut a = observed_normal_matrix(observed, &x_t, &y_t);
    if lambda > 0.0 {
        // the penalty over E^c equals the full-matrix term minus the E term
        let gx = factors.x().transpose() * factors.x();
        let gy = factors.y().transpose() * factors.y();
        let full = gy.kronecker(&gx);
        a = a * (1.0 - lambda) + full * lambda;
    }
    let b = observed_rhs(observed, factors.x(), &y_t);
    let (s, rank_deficient) = solve_symmetric(a, b.as_slice());
    Ok(CoreSolution {
        core: DMatrix::from_column_slice(r, r, &s),
        rank_deficient,
        underdetermined: r * r > observed.nnz(),
    })
}

fn predictions(observed: &ObservedMatrix, factors: &FactorPair, core: &DMatrix<f64>) -> Vec<f64> {
    let xs_t = (factors.x() * core).transpose();
    let y_t = factors.y().transpose();
    observed
        .iter()
        .map(|(i, j, _)| xs_t.column(i).dot(&y_t.column(j)))
        .collect()
}

/// `F(X, Y, S)` for an arbitrary core.
pub fn objective(observed: &ObservedMatrix, factors: &FactorPair, core: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    check_shapes(observed, factors)?;
    let pred = predictions(observed, factors, core);
    Ok(objective_from_predictions(observed, factors, core, &pred, lambda).0)
}

fn objective_from_predictions(
    observed: &ObservedMatrix,
    factors: &FactorPair,
    core: &DMatrix<f64>,
    pred: &[f64],
    lambda: f64,
) -> (f64, f64) {
    let residual_sq: f64 = observed
        .values()
        .iter()
        .zip(pred)
        .map(|(m, p)| (m - p) * (m - p))
        .sum();
    let mut value = 0.5 * residual_sq;
    if lambda > 0.0 {
        let gx = factors.x().transpose() * factors.x();
        let gy = factors.y().transpose() * factors.y();
        // ||X S Y^T||_F^2 = tr(S^T Gx S Gy)
        let full = (core.transpose() * gx * core * gy).trace();
        let on_e: f64 = pred.iter().map(|p| p * p).sum();
        value += 0.5 * lambda * (full - on_e);
    }
    (value, residual_sq)
}

/// `F(X, Y)` together with the minimizing core.
pub fn cost(observed: &ObservedMatrix, factors: &FactorPair, lambda: f64) -> Result<CostEval> {
    let solution = solve_core(observed, factors, lambda)?;
    let pred = predictions(observed, factors, &solution.core);
    let (value, residual_sq) = objective_from_predictions(observed, factors, &solution.core, &pred, lambda);
    Ok(CostEval {
        value,
        core: solution.core,
        observed_residual_sq: residual_sq,
        rank_deficient: solution.rank_deficient,
    })
}

/// Euclidean gradient of `F` at `triple`, whose core must minimize `F(X, Y, .)`:
///
/// ```text
/// G_X = P_E(X S Y^T - M) Y S^T    G_Y = P_E(X S Y^T - M)^T X S
/// ```
///
/// plus the regularization terms when `lambda > 0`.
pub fn euclidean_gradient(observed: &ObservedMatrix, triple: &FactorTriple, lambda: f64) -> Result<TangentVector> {
    check_shapes(observed, &triple.factors)?;
    let (x, y, s) = (triple.x(), triple.y(), &triple.core);
    let r = triple.rank();
    let xs_t = (x * s).transpose(); // rows of X S
    let ys_t = (y * s.transpose()).transpose(); // rows of Y S^T
    let y_t = y.transpose();
    let mut gx_t = DMatrix::<f64>::zeros(r, x.nrows());
    let mut gy_t = DMatrix::<f64>::zeros(r, y.nrows());
    for (i, j, m) in observed.iter() {
        let pred = xs_t.column(i).dot(&y_t.column(j));
        // d/dX of the lambda term contributes -lambda * pred on E
        let coeff = (1.0 - lambda) * pred - m;
        gx_t.column_mut(i).axpy(coeff, &ys_t.column(j), 1.0);
        gy_t.column_mut(j).axpy(coeff, &xs_t.column(i), 1.0);
    }
    let mut gx = gx_t.transpose();
    let mut gy = gy_t.transpose();
    if lambda > 0.0 {
        let gram_x = x.transpose() * x;
        let gram_y = y.transpose() * y;
        gx += x * (s * gram_y * s.transpose()) * lambda;
        gy += y * (s.transpose() * gram_x * s) * lambda;
    }
    Ok(TangentVector { x: gx, y: gy })
}

/// Gradient of `F` projected onto the tangent space at `triple.factors`.
pub fn gradient(observed: &ObservedMatrix, triple: &FactorTriple, lambda: f64) -> Result<TangentVector> {
    Ok(euclidean_gradient(observed, triple, lambda)?.project_to_tangent(&triple.factors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::retract;
    use crate::sparse::ProblemShape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_pattern(rng: &mut ChaCha8Rng, dense: &DMatrix<f64>, count: usize) -> ObservedMatrix {
        let (m, n) = dense.shape();
        let mut positions = Vec::new();
        while positions.len() < count {
            let p = (rng.random_range(0..m), rng.random_range(0..n));
            if !positions.contains(&p) {
                positions.push(p);
            }
        }
        ObservedMatrix::new(
            ProblemShape::new(m, n).unwrap(),
            positions.into_iter().map(|(i, j)| (i, j, dense[(i, j)])),
        )
        .unwrap()
    }

    #[test]
    fn recovers_core_on_full_observation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pair = retract(&random(&mut rng, 7, 2), &random(&mut rng, 5, 2)).unwrap();
        let s_true = random(&mut rng, 2, 2);
        let dense = pair.x() * &s_true * pair.y().transpose();
        let full = random_pattern(&mut rng, &dense, 35);
        let sol = solve_core(&full, &pair, 0.0).unwrap();
        assert!((sol.core - &s_true).amax() < 1e-10);
        let c = cost(&full, &pair, 0.0).unwrap();
        assert!(c.value < 1e-20);
        let triple = FactorTriple::new(pair, c.core).unwrap();
        assert!(gradient(&full, &triple, 0.0).unwrap().norm_sq() < 1e-18);
    }

    #[test]
    fn rank_one_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pair = retract(&random(&mut rng, 6, 1), &random(&mut rng, 4, 1)).unwrap();
        let dense = random(&mut rng, 6, 4);
        let observed = random_pattern(&mut rng, &dense, 9);
        let (x, y) = (pair.x(), pair.y());
        let num: f64 = observed.iter().map(|(i, j, m)| m * x[(i, 0)] * y[(j, 0)]).sum();
        let den: f64 = observed.iter().map(|(i, j, _)| (x[(i, 0)] * y[(j, 0)]).powi(2)).sum();
        let sol = solve_core(&observed, &pair, 0.0).unwrap();
        assert!((sol.core[(0, 0)] - num / den).abs() < 1e-12 * (num / den).abs().max(1.0));
    }

    #[test]
    fn empty_observation_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pair = retract(&random(&mut rng, 4, 1), &random(&mut rng, 4, 1)).unwrap();
        let empty = ObservedMatrix::new(ProblemShape::square(4).unwrap(), []).unwrap();
        assert!(matches!(cost(&empty, &pair, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn underdetermined_system_flags_and_min_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pair = retract(&random(&mut rng, 6, 3), &random(&mut rng, 6, 3)).unwrap();
        let dense = random(&mut rng, 6, 6);
        let observed = random_pattern(&mut rng, &dense, 5);
        let sol = solve_core(&observed, &pair, 0.0).unwrap();
        assert!(sol.underdetermined && sol.rank_deficient);
        // still interpolates the five observations
        let triple = FactorTriple::new(pair, sol.core).unwrap();
        for (i, j, m) in observed.iter() {
            use crate::sparse::MatrixLike;
            assert!((triple.entry(i, j) - m).abs() < 1e-9);
        }
    }

    #[test]
    fn regularized_core_matches_dense_objective() {
        // With lambda = 1 the objective is 1/2||P_E(M - XSY^T)||^2 + 1/2||P_Ec(XSY^T)||^2
        // whose minimizer is S = X^T P_E(M) Y / (m n).
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pair = retract(&random(&mut rng, 8, 2), &random(&mut rng, 7, 2)).unwrap();
        let dense = random(&mut rng, 8, 7);
        let observed = random_pattern(&mut rng, &dense, 20);
        let sol = solve_core(&observed, &pair, 1.0).unwrap();
        let expected = pair.x().transpose() * observed.to_dense() * pair.y() / 56.0;
        assert!((sol.core - expected).amax() < 1e-12);

        let lambda = 0.3;
        let c = cost(&observed, &pair, lambda).unwrap();
        let est = pair.x() * &c.core * pair.y().transpose();
        let mut brute = 0.0;
        for i in 0..8 {
            for j in 0..7 {
                brute += match observed.get(i, j) {
                    Some(m) => 0.5 * (m - est[(i, j)]).powi(2),
                    None => 0.5 * lambda * est[(i, j)].powi(2),
                };
            }
        }
        assert!((c.value - brute).abs() < 1e-12 * brute.max(1.0));
    }

    #[test]
    fn tangent_projection_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let pair = retract(&random(&mut rng, 8, 2), &random(&mut rng, 8, 2)).unwrap();
        let dense = random(&mut rng, 8, 8);
        let observed = random_pattern(&mut rng, &dense, 30);
        let c = cost(&observed, &pair, 0.0).unwrap();
        let triple = FactorTriple::new(pair, c.core).unwrap();
        let w = gradient(&observed, &triple, 0.0).unwrap();
        assert!((triple.x().transpose() * &w.x).amax() < 1e-10);
        assert!((triple.y().transpose() * &w.y).amax() < 1e-10);
    }
}
