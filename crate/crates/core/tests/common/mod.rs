#![allow(dead_code)]

use nalgebra::DMatrix;
use optspace::manifold::{retract, FactorPair};
use optspace::{ObservedMatrix, ProblemShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_pair(rng: &mut ChaCha8Rng, m: usize, n: usize, r: usize) -> FactorPair {
    retract(&gaussian(rng, m, r), &gaussian(rng, n, r)).unwrap()
}

/// `count` distinct positions drawn uniformly, in draw order.
pub fn random_positions(rng: &mut ChaCha8Rng, m: usize, n: usize, count: usize) -> Vec<(usize, usize)> {
    let mut seen = vec![false; m * n];
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (i, j) = (rng.random_range(0..m), rng.random_range(0..n));
        if !seen[i * n + j] {
            seen[i * n + j] = true;
            out.push((i, j));
        }
    }
    out
}

pub fn observe(dense: &DMatrix<f64>, positions: &[(usize, usize)]) -> ObservedMatrix {
    let (m, n) = dense.shape();
    ObservedMatrix::new(
        ProblemShape::new(m, n).unwrap(),
        positions.iter().map(|&(i, j)| (i, j, dense[(i, j)])),
    )
    .unwrap()
}

/// Gaussian `m x n` matrix observed on `count` random entries.
pub fn random_problem(rng: &mut ChaCha8Rng, m: usize, n: usize, count: usize) -> ObservedMatrix {
    let dense = gaussian(rng, m, n);
    let positions = random_positions(rng, m, n, count);
    observe(&dense, &positions)
}

/// `(X S Y^T)_ij` as a linear function of `vec(S)` (column-major), one row
/// per observed entry.
pub fn design_matrix(observed: &ObservedMatrix, pair: &FactorPair) -> DMatrix<f64> {
    let r = pair.rank();
    let (x, y) = (pair.x(), pair.y());
    let rows: Vec<(usize, usize)> = observed.iter().map(|(i, j, _)| (i, j)).collect();
    DMatrix::from_fn(rows.len(), r * r, |e, k| {
        let (i, j) = rows[e];
        let (a, b) = (k % r, k / r);
        x[(i, a)] * y[(j, b)]
    })
}
