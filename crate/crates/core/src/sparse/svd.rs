//! Truncated SVD by Golub-Kahan-Lanczos bidiagonalization with full
//! reorthogonalization.
//!
//! With `V_j` and `U_j` the Lanczos bases and `B_j` the upper bidiagonal
//! matrix of the recurrence coefficients,
//!
//! ```text
//! A V_j   = U_j B_j
//! A^T U_j = V_j B_j^T + beta_j v_{j+1} e_j^T
//! ```
//!
//! so if `B_j = P S Q^T` the Ritz triplet `(s_i, U_j p_i, V_j q_i)` has
//! residual `beta_j |P[j, i]|`. That estimate decides when to stop; the
//! returned residuals are recomputed explicitly from the operator.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LinearOperator;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone)]
pub struct SvdOptions {
    /// Residual tolerance relative to the largest singular value.
    pub tol: f64,
    /// Seed of the random start vector.
    pub seed: u64,
    /// Lanczos step budget; `None` means `30 k + 100`.
    pub max_iterations: Option<usize>,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            seed: 0,
            max_iterations: None,
        }
    }
}

impl SvdOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// Leading singular triplets of an operator.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    /// Non-increasing, non-negative.
    pub singular_values: Vec<f64>,
    /// `m x k`, orthonormal columns.
    pub left: DMatrix<f64>,
    /// `n x k`, orthonormal columns.
    pub right: DMatrix<f64>,
    /// `sqrt(|A v - s u|^2 + |A^T u - s v|^2)` per triplet.
    pub residuals: Vec<f64>,
    /// Lanczos steps taken.
    pub iterations: usize,
}

impl SpectralSummary {
    pub fn k(&self) -> usize {
        self.singular_values.len()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn orthogonalize(x: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, x);
            axpy(-c, q, x);
        }
    }
}

fn random_orthogonal_unit(rng: &mut ChaCha8Rng, len: usize, basis: &[Vec<f64>]) -> Result<Vec<f64>> {
    for _ in 0..8 {
        let mut x: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let before = norm(&x);
        orthogonalize(&mut x, basis);
        let after = norm(&x);
        if after > 1e-8 * before {
            x.iter_mut().for_each(|v| *v /= after);
            return Ok(x);
        }
    }
    Err(Error::degenerate("could not extend the Lanczos basis"))
}

struct Ritz {
    values: Vec<f64>,
    left: DMatrix<f64>,
    right: DMatrix<f64>,
    estimates: Vec<f64>,
}

// `tail` appends the final right vector and its coupling as an extra column
// of B, which makes B exact once the left basis spans the whole space.
fn ritz(
    alphas: &[f64],
    betas: &[f64],
    coupling: f64,
    us: &[Vec<f64>],
    vs: &[Vec<f64>],
    tail: Option<(&[f64], f64)>,
    k: usize,
) -> Ritz {
    let s = alphas.len();
    let cols = if tail.is_some() { s + 1 } else { s };
    let mut b = DMatrix::zeros(s, cols);
    for i in 0..s {
        b[(i, i)] = alphas[i];
        if i + 1 < s {
            b[(i, i + 1)] = betas[i];
        }
    }
    if let Some((_, beta)) = tail {
        b[(s - 1, s)] = beta;
    }
    let svd = b.svd(true, true);
    let p = svd.u.expect("left vectors requested");
    let qt = svd.v_t.expect("right vectors requested");
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    order.truncate(k);

    let m = us[0].len();
    let n = vs[0].len();
    let mut left = DMatrix::zeros(m, k);
    let mut right = DMatrix::zeros(n, k);
    let mut values = Vec::with_capacity(k);
    let mut estimates = Vec::with_capacity(k);
    for (c, &idx) in order.iter().enumerate() {
        values.push(svd.singular_values[idx].max(0.0));
        estimates.push(coupling * p[(s - 1, idx)].abs());
        let mut col = left.column_mut(c);
        for (t, u) in us.iter().enumerate().take(s) {
            let w = p[(t, idx)];
            for (dst, src) in col.iter_mut().zip(u) {
                *dst += w * src;
            }
        }
        let mut col = right.column_mut(c);
        let basis = vs.iter().take(s).map(Vec::as_slice).chain(tail.map(|(v, _)| v));
        for (t, v) in basis.enumerate() {
            let w = qt[(idx, t)];
            for (dst, src) in col.iter_mut().zip(v) {
                *dst += w * src;
            }
        }
    }
    Ritz {
        values,
        left,
        right,
        estimates,
    }
}

fn explicit_residuals<A: LinearOperator + ?Sized>(op: &A, ritz: &Ritz) -> Vec<f64> {
    let (m, n) = (op.nrows(), op.ncols());
    let mut av = vec![0.0; m];
    let mut atu = vec![0.0; n];
    (0..ritz.values.len())
        .map(|i| {
            let s = ritz.values[i];
            let u = ritz.left.column(i);
            let v = ritz.right.column(i);
            op.apply(v.as_slice(), &mut av);
            op.apply_transpose(u.as_slice(), &mut atu);
            let r1: f64 = av.iter().zip(u.iter()).map(|(a, b)| (a - s * b).powi(2)).sum();
            let r2: f64 = atu.iter().zip(v.iter()).map(|(a, b)| (a - s * b).powi(2)).sum();
            (r1 + r2).sqrt()
        })
        .collect()
}

/// Top-`k` singular triplets of `op`.
///
/// Fails with [`Error::NoConvergence`] when the step budget runs out before
/// every residual is below `tol * sigma_1`; the error carries the residuals
/// of the best available approximation.
pub fn truncated_svd<A: LinearOperator + ?Sized>(op: &A, k: usize, options: &SvdOptions) -> Result<SpectralSummary> {
    let (m, n) = (op.nrows(), op.ncols());
    let p = m.min(n);
    if k == 0 || k > p {
        return Err(Error::config(format!("requested {k} singular triplets of a {m}x{n} operator")));
    }
    if !(options.tol > 0.0) {
        return Err(Error::config("SVD tolerance must be positive"));
    }
    let budget = options.max_iterations.unwrap_or(30 * k + 100).max(k);
    let max_steps = budget.min(p);

    let mut rng = stream(options.seed, Stream::Lanczos);
    let mut us: Vec<Vec<f64>> = Vec::with_capacity(max_steps);
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(max_steps + 1);
    let mut alphas = Vec::with_capacity(max_steps);
    let mut betas: Vec<f64> = Vec::with_capacity(max_steps);
    vs.push(random_orthogonal_unit(&mut rng, n, &[])?);

    let mut scale: f64 = 0.0;
    let mut next_check = (k + (k / 2).max(5)).min(max_steps);
    let mut best: Option<(Ritz, Vec<f64>)> = None;

    for j in 0..max_steps {
        let mut u = vec![0.0; m];
        op.apply(&vs[j], &mut u);
        if j > 0 {
            axpy(-betas[j - 1], &us[j - 1], &mut u);
        }
        orthogonalize(&mut u, &us);
        let mut alpha = norm(&u);
        scale = scale.max(alpha);
        if alpha <= scale * 1e-13 {
            // A v_j already lies in span(U): restart the left recurrence.
            u = random_orthogonal_unit(&mut rng, m, &us)?;
            alpha = 0.0;
        } else {
            u.iter_mut().for_each(|x| *x /= alpha);
        }
        us.push(u);
        alphas.push(alpha);

        let mut w = vec![0.0; n];
        op.apply_transpose(&us[j], &mut w);
        axpy(-alpha, &vs[j], &mut w);
        orthogonalize(&mut w, &vs);
        let beta = norm(&w);
        scale = scale.max(beta);
        let steps = j + 1;
        let last = steps == max_steps;

        if steps >= next_check || last {
            let exhausted = last && steps == p;
            let coupling = if exhausted { 0.0 } else { beta };
            // with m < n the left basis is complete but A^T U still reaches
            // one more right direction
            let tail_vec: Vec<f64>;
            let tail = if exhausted && beta > scale * 1e-13 {
                tail_vec = w.iter().map(|x| x / beta).collect();
                Some((tail_vec.as_slice(), beta))
            } else {
                None
            };
            let candidate = ritz(&alphas, &betas, coupling, &us, &vs, tail, k);
            let threshold = options.tol * candidate.values[0];
            if last || candidate.estimates.iter().all(|&e| e <= threshold) {
                let residuals = explicit_residuals(op, &candidate);
                let converged = residuals.iter().all(|&r| r <= threshold.max(f64::MIN_POSITIVE));
                if converged || candidate.values[0] == 0.0 {
                    return Ok(SpectralSummary {
                        singular_values: candidate.values,
                        left: candidate.left,
                        right: candidate.right,
                        residuals,
                        iterations: steps,
                    });
                }
                best = Some((candidate, residuals));
            }
            next_check = steps + (steps / 4).max(5);
        }
        if last {
            break;
        }

        if beta <= scale * 1e-13 {
            vs.push(random_orthogonal_unit(&mut rng, n, &vs)?);
            betas.push(0.0);
        } else {
            w.iter_mut().for_each(|x| *x /= beta);
            vs.push(w);
            betas.push(beta);
        }
    }

    let residuals = best.map(|(_, r)| r).unwrap_or_default();
    Err(Error::NoConvergence {
        iterations: alphas.len(),
        residuals,
    })
}
