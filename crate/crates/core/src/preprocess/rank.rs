use crate::error::{Error, Result};
use crate::sparse::{truncated_svd, ObservedMatrix, ProblemShape, SvdOptions};

/// Singular values at or below this fraction of `sigma_1` are treated as zero.
const ZERO_SINGULAR_VALUE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct RankEstimate {
    pub r_hat: usize,
    /// `costs[i - 1] = R(i)` for `i = 1..k-1`; `+inf` where `sigma_i` is zero.
    pub costs: Vec<f64>,
    pub singular_values: Vec<f64>,
    /// `|E| / sqrt(m n)` of the matrix whose spectrum was used.
    pub epsilon: f64,
    /// Fewer than two nonzero singular values; `r_hat` defaults to 1.
    pub degenerate: bool,
}

impl RankEstimate {
    /// `R(i) = (sigma_{i+1} + sigma_1 sqrt(i / eps)) / sigma_i`, 1-based.
    pub fn cost(&self, i: usize) -> f64 {
        gap_cost(&self.singular_values, self.epsilon, i)
    }
}

fn gap_cost(sigma: &[f64], epsilon: f64, i: usize) -> f64 {
    let s1 = sigma[0];
    let si = sigma[i - 1];
    if si <= s1 * ZERO_SINGULAR_VALUE || si == 0.0 {
        return f64::INFINITY;
    }
    (sigma[i] + s1 * (i as f64 / epsilon).sqrt()) / si
}

/// `min(50, min(m, n) - 1)`, but never below 2.
pub fn default_k_max(shape: ProblemShape) -> usize {
    50.min(shape.min_dim().saturating_sub(1)).max(2)
}

/// Picks the index minimizing `R(i)` over a given non-increasing spectrum.
/// Ties go to the smallest index.
pub fn rank_from_spectrum(singular_values: &[f64], epsilon: f64) -> Result<RankEstimate> {
    if singular_values.len() < 2 {
        return Err(Error::config("rank estimation needs at least two singular values"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::degenerate("rank estimation needs epsilon > 0"));
    }
    let sigma = singular_values.to_vec();
    let s1 = sigma[0];
    let nonzero = sigma.iter().filter(|&&s| s > s1 * ZERO_SINGULAR_VALUE && s > 0.0).count();
    let costs: Vec<f64> = (1..sigma.len()).map(|i| gap_cost(&sigma, epsilon, i)).collect();
    if nonzero < 2 {
        return Ok(RankEstimate {
            r_hat: 1,
            costs,
            singular_values: sigma,
            epsilon,
            degenerate: true,
        });
    }
    let mut r_hat = 1;
    for (idx, &c) in costs.iter().enumerate() {
        if c < costs[r_hat - 1] {
            r_hat = idx + 1;
        }
    }
    Ok(RankEstimate {
        r_hat,
        costs,
        singular_values: sigma,
        epsilon,
        degenerate: false,
    })
}

/// Estimates the rank of the matrix behind a (trimmed) observation from the
/// top `k_max` singular values of the observed matrix.
///
/// `epsilon` is taken from `trimmed` itself, so pass the post-trim matrix.
pub fn estimate_rank(trimmed: &ObservedMatrix, k_max: usize, svd: &SvdOptions) -> Result<RankEstimate> {
    if k_max < 2 {
        return Err(Error::config(format!("k_max must be at least 2, got {k_max}")));
    }
    if trimmed.is_empty() {
        return Err(Error::degenerate("rank estimation on an empty observation"));
    }
    let k = k_max.min(trimmed.shape().min_dim());
    if k < 2 {
        return Err(Error::config("rank estimation needs a matrix with both dimensions at least 2"));
    }
    let spectrum = truncated_svd(trimmed, k, svd)?;
    rank_from_spectrum(&spectrum.singular_values, trimmed.epsilon())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn full(m: &DMatrix<f64>) -> ObservedMatrix {
        let shape = ProblemShape::new(m.nrows(), m.ncols()).unwrap();
        ObservedMatrix::new(shape, (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j, m[(i, j)])))).unwrap()
    }

    // Orthonormal columns from a deterministic rotation-like construction.
    fn orthonormal(n: usize, r: usize, phase: f64) -> DMatrix<f64> {
        let raw = DMatrix::from_fn(n, r, |i, j| ((i + 1) as f64 * (j as f64 + phase)).sin() + 0.1 * ((i * j) as f64).cos());
        raw.qr().q()
    }

    #[test]
    fn exact_rank_three_spectrum() {
        // sigma = (30, 20, 10, 0, ...), eps = n = 100:
        // R(1) = (20 + 30 sqrt(1/100)) / 30 = 0.7667
        // R(2) = (10 + 30 sqrt(2/100)) / 20 = 0.7121
        // R(3) = (0 + 30 sqrt(3/100)) / 10  = 0.5196
        let est = rank_from_spectrum(&[30.0, 20.0, 10.0, 0.0, 0.0], 100.0).unwrap();
        assert_eq!(est.r_hat, 3);
        assert!((est.costs[0] - 0.766_666_666_666_666_7).abs() < 1e-12);
        assert!((est.costs[1] - (10.0 + 30.0 * 0.02f64.sqrt()) / 20.0).abs() < 1e-12);
        assert!((est.costs[2] - 3.0 * 0.03f64.sqrt()).abs() < 1e-12);
        assert!(est.costs[3].is_infinite());
    }

    #[test]
    fn fully_observed_rank_three_matrix() {
        let n = 100;
        let u = orthonormal(n, 3, 0.3);
        let v = orthonormal(n, 3, 0.7);
        let m = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![30.0, 20.0, 10.0])) * v.transpose();
        let observed = full(&m);
        assert_eq!(observed.epsilon(), n as f64);
        let est = estimate_rank(&observed, default_k_max(observed.shape()), &SvdOptions::default()).unwrap();
        assert_eq!(est.r_hat, 3);
        assert!((est.singular_values[2] - 10.0).abs() < 1e-8);
        for i in 1..est.singular_values.len() {
            assert_eq!(est.cost(i).to_bits(), est.costs[i - 1].to_bits());
        }
    }

    #[test]
    fn rank_one_matrix() {
        let u = orthonormal(20, 1, 0.5);
        let m = &u * u.transpose() * 4.0;
        let est = estimate_rank(&full(&m), 5, &SvdOptions::default()).unwrap();
        assert_eq!(est.r_hat, 1);
        assert!(est.degenerate);
    }

    #[test]
    fn ties_break_low() {
        // R(1) = (1 + 2 * 0.5) / 2 = 1, R(2) = (0.5 + 2 * sqrt(2) / 2) / 1 > 1
        let est = rank_from_spectrum(&[2.0, 1.0, 0.5], 4.0).unwrap();
        assert_eq!(est.r_hat, 1);
        // R(1) = R(2) exactly
        let est = rank_from_spectrum(&[1.0, 1.0, 1.0], 1e300).unwrap();
        assert_eq!(est.costs[0], est.costs[1]);
        assert_eq!(est.r_hat, 1);
    }

    #[test]
    fn input_validation() {
        let m = ObservedMatrix::pattern(ProblemShape::square(4).unwrap(), [(0, 0)]).unwrap();
        assert!(estimate_rank(&m, 1, &SvdOptions::default()).is_err());
        assert!(rank_from_spectrum(&[1.0], 2.0).is_err());
        assert!(rank_from_spectrum(&[1.0, 0.5], 0.0).is_err());
        assert_eq!(default_k_max(ProblemShape::square(1000).unwrap()), 50);
        assert_eq!(default_k_max(ProblemShape::new(10, 1000).unwrap()), 9);
    }
}
