mod common;

use common::*;
use nalgebra::DMatrix;
use optspace::preprocess::{estimate_rank, trim};
use optspace::sparse::{observed_frobenius, truncated_svd, LowRankResidual, SvdOptions};
use optspace::synth::sample_pattern;
use optspace::{ObservedMatrix, ProblemShape};
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

fn dense_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

fn assert_matches_dense(got: &[f64], dense: &[f64]) {
    for (k, (a, b)) in got.iter().zip(dense).enumerate() {
        assert!((a - b).abs() <= 1e-8 * dense[0].max(1e-300), "sigma_{k}: {a} vs {b}");
    }
}

#[test]
fn sparse_svd_matches_dense_oracle() {
    let mut rng = rng(40);
    let sparse = random_problem(&mut rng, 40, 30, 360);
    let summary = truncated_svd(&sparse, 5, &SvdOptions::default()).unwrap();
    assert_matches_dense(&summary.singular_values, &dense_singular_values(&sparse.to_dense()));
    let gram = summary.left.transpose() * &summary.left;
    assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-10);
    let gram = summary.right.transpose() * &summary.right;
    assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn svd_agrees_with_dense_up_to_50(seed in any::<u64>(), m in 2usize..=50, n in 2usize..=50, frac in 0.1f64..1.0) {
        let mut rng = rng(seed);
        let count = ((m * n) as f64 * frac).ceil() as usize;
        let sparse = random_problem(&mut rng, m, n, count);
        let k = rng.random_range(1..=m.min(n));
        let summary = truncated_svd(&sparse, k, &SvdOptions::with_seed(seed)).unwrap();
        let dense = dense_singular_values(&sparse.to_dense());
        prop_assert!(summary.singular_values.windows(2).all(|w| w[0] >= w[1]));
        for (a, b) in summary.singular_values.iter().zip(&dense) {
            prop_assert!((a - b).abs() <= 1e-8 * dense[0], "{} vs {}", a, b);
        }
    }

    #[test]
    fn composite_svd_agrees_with_dense(seed in any::<u64>(), m in 3usize..=40, n in 3usize..=40) {
        let mut rng = rng(seed);
        let sparse = random_problem(&mut rng, m, n, m * n / 2);
        let left = gaussian(&mut rng, m, 2);
        let right = gaussian(&mut rng, n, 2);
        let core = gaussian(&mut rng, 2, 2);
        let op = LowRankResidual::new(&sparse, &left, &core, &right).unwrap();
        let summary = truncated_svd(&op, 3, &SvdOptions::default()).unwrap();
        let dense = dense_singular_values(&op.to_dense());
        for (a, b) in summary.singular_values.iter().zip(&dense) {
            prop_assert!((a - b).abs() <= 1e-8 * dense[0], "{} vs {}", a, b);
        }
    }

    #[test]
    fn trimming_matches_degree_oracle(seed in any::<u64>(), m in 2usize..60, n in 2usize..60) {
        let mut rng = rng(seed);
        let count = rng.random_range(1..=m * n);
        let observed = random_problem(&mut rng, m, n, count);
        let positions: Vec<(usize, usize)> = observed.iter().map(|(i, j, _)| (i, j)).collect();
        let mut row_deg = vec![0usize; m];
        let mut col_deg = vec![0usize; n];
        for &(i, j) in &positions {
            row_deg[i] += 1;
            col_deg[j] += 1;
        }
        let e = positions.len() as f64;
        let heavy_row: Vec<bool> = row_deg.iter().map(|&d| d as f64 > 2.0 * e / m as f64).collect();
        let heavy_col: Vec<bool> = col_deg.iter().map(|&d| d as f64 > 2.0 * e / n as f64).collect();
        let kept: Vec<(usize, usize)> = positions.iter().copied().filter(|&(i, j)| !heavy_row[i] && !heavy_col[j]).collect();
        match trim(&observed) {
            Ok(report) => {
                let got: Vec<(usize, usize)> = report.trimmed.iter().map(|(i, j, _)| (i, j)).collect();
                prop_assert_eq!(got, kept);
                prop_assert_eq!(report.zeroed_rows, (0..m).filter(|&i| heavy_row[i]).collect::<Vec<_>>());
                prop_assert_eq!(report.zeroed_cols, (0..n).filter(|&j| heavy_col[j]).collect::<Vec<_>>());
                for (i, &d) in row_deg.iter().enumerate() {
                    prop_assert!(report.trimmed.row_degree(i) <= d);
                }
                for (j, &d) in col_deg.iter().enumerate() {
                    prop_assert!(report.trimmed.col_degree(j) <= d);
                }
            }
            Err(_) => prop_assert!(kept.is_empty()),
        }
    }

    #[test]
    fn observed_frobenius_matches_masking(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let a = gaussian(&mut rng, 5, 5);
        let b = gaussian(&mut rng, 5, 5);
        let count = rng.random_range(1..=25);
        let positions = random_positions(&mut rng, 5, 5, count);
        let observed = observe(&a, &positions);
        let mut mask = DMatrix::zeros(5, 5);
        for &(i, j) in &positions {
            mask[(i, j)] = 1.0;
        }
        let oracle = (a - &b).component_mul(&mask).norm();
        prop_assert!((observed_frobenius(&observed, &b).unwrap() - oracle).abs() <= 1e-12 * oracle.max(1.0));
    }

    #[test]
    fn rank_estimate_is_scale_invariant(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let dense = gaussian(&mut rng, 60, 3) * gaussian(&mut rng, 50, 3).transpose();
        let positions = random_positions(&mut rng, 60, 50, 1500);
        let observed = observe(&dense, &positions);
        let trimmed = trim(&observed).unwrap().trimmed;
        let svd = SvdOptions::with_seed(seed);
        let a = estimate_rank(&trimmed, 20, &svd).unwrap();
        let b = estimate_rank(&trimmed.scaled(7.0), 20, &svd).unwrap();
        prop_assert_eq!(a.r_hat, b.r_hat);
    }
}

#[test]
fn planted_dense_row_is_trimmed() {
    let mut rng = rng(7);
    let shape = ProblemShape::square(100).unwrap();
    let mut positions: Vec<(usize, usize)> = random_positions(&mut rng, 100, 100, 940)
        .into_iter()
        .filter(|&(i, _)| i != 13)
        .collect();
    positions.extend((0..60).map(|j| (13, j)));
    let observed = ObservedMatrix::pattern(shape, positions.clone()).unwrap();
    let report = trim(&observed).unwrap();
    let threshold = 2.0 * observed.nnz() as f64 / 100.0;
    let recount = |i: usize| positions.iter().filter(|p| p.0 == i).count();
    let oracle: Vec<usize> = (0..100).filter(|&i| recount(i) as f64 > threshold).collect();
    assert!(oracle.contains(&13));
    assert_eq!(report.zeroed_rows, oracle);
    assert_eq!(report.trimmed.row_degree(13), 0);
}

#[test]
fn pattern_size_concentrates() {
    let shape = ProblemShape::square(1000).unwrap();
    let p: f64 = 0.1;
    let mean = 1e6 * p;
    let sd = (1e6 * p * (1.0 - p)).sqrt();
    for seed in 0..20 {
        let pattern = sample_pattern(shape, 100.0, seed).unwrap();
        let z = (pattern.nnz() as f64 - mean) / sd;
        assert!(z.abs() <= 3.0, "seed {seed}: |E| = {}", pattern.nnz());
    }
}

#[test]
fn row_degrees_are_binomial() {
    // pooled chi-square goodness of fit over 20 seeds
    let (n, eps) = (500usize, 50.0);
    let p = eps / n as f64;
    let shape = ProblemShape::square(n).unwrap();
    let mut counts = vec![0usize; n + 1];
    let mut total = 0usize;
    for seed in 0..20 {
        let pattern = sample_pattern(shape, eps, 1000 + seed).unwrap();
        for d in pattern.row_degrees() {
            counts[d] += 1;
            total += 1;
        }
    }
    let binom = Binomial::new(p, n as u64).unwrap();
    // bins with expected count >= 5, tails merged
    let expected: Vec<f64> = (0..=n).map(|k| binom.pmf(k as u64) * total as f64).collect();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs_acc, mut exp_acc) = (0.0, 0.0);
    for k in 0..=n {
        obs_acc += counts[k] as f64;
        exp_acc += expected[k];
        if exp_acc >= 5.0 && expected[k + 1..].iter().sum::<f64>() >= 5.0 {
            bins.push((obs_acc, exp_acc));
            obs_acc = 0.0;
            exp_acc = 0.0;
        }
    }
    let last = bins.last_mut().unwrap();
    last.0 += obs_acc;
    last.1 += exp_acc;
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let critical = ChiSquared::new((bins.len() - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi2 = {stat}, critical {critical}, bins {}", bins.len());
}
