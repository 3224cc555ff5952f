use nalgebra::DMatrix;

use super::driver::{descend, spectral_init, svd_options, Criterion, OptSpaceResult, StopReason, Tracker};
use super::{retract, FactorTriple, OptConfig, ResidualMode};
use crate::error::{Error, Result};
use crate::preprocess::trim;
use crate::sparse::{truncated_svd, LowRankResidual, MatrixLike, ObservedMatrix, SpectralSummary, SvdOptions};

fn top_residual_direction(
    trimmed: &ObservedMatrix,
    current: &FactorTriple,
    mode: ResidualMode,
    svd: &SvdOptions,
) -> Result<SpectralSummary> {
    match mode {
        ResidualMode::Observed => {
            let fitted = current.values_on(trimmed);
            let values = trimmed.values().iter().zip(&fitted).map(|(a, b)| a - b).collect();
            truncated_svd(&trimmed.with_values(values)?, 1, svd)
        }
        ResidualMode::ScaledComposite => {
            let (m, n) = trimmed.shape().dims();
            let p = trimmed.nnz() as f64 / (m as f64 * n as f64);
            let op = LowRankResidual::new(trimmed, current.x(), &current.core, current.y())?.with_scale(p);
            truncated_svd(&op, 1, svd)
        }
    }
}

/// Incremental OptSpace: grows the rank one residual direction at a time,
/// re-optimizing all factors after each addition.
///
/// Stops once the relative fit error drops below `delta_tol` or the rank
/// reaches `rho_max`.
pub fn incremental_optspace(observed: &ObservedMatrix, config: &OptConfig) -> Result<OptSpaceResult> {
    incremental_optspace_with_truth(observed, config, None)
}

pub fn incremental_optspace_with_truth(
    observed: &ObservedMatrix,
    config: &OptConfig,
    truth: Option<&DMatrix<f64>>,
) -> Result<OptSpaceResult> {
    config.validate()?;
    let report = trim(observed)?;
    let (m, n) = observed.shape().dims();
    let rho_max = config.rho_max.min(m.min(n));
    let svd = svd_options(config);
    let mut tracker = Tracker::new(observed, config, truth)?;

    let mut init = spectral_init(&report.trimmed, 1, &svd)?;
    let mut round = 1;
    loop {
        let run = descend(&mut tracker, init, Criterion::RelativeDecrease)?;
        let fit = run.trace.last().map_or(f64::INFINITY, |r| r.fit_error);
        let done = fit < config.delta_tol || matches!(run.stop, StopReason::FitTolerance | StopReason::NoiseLevel);
        if done || round >= rho_max {
            let stop = if done { run.stop } else { StopReason::MaxIterations };
            let stop = if fit < config.delta_tol { StopReason::FitTolerance } else { stop };
            return Ok(OptSpaceResult {
                triple: run.triple,
                trace: tracker.into_trace(),
                stop,
                trim: report,
                rank_estimate: None,
            });
        }
        let direction = top_residual_direction(&report.trimmed, &run.triple, config.residual_mode, &svd)?;
        let (x, y) = run.triple.factors.into_parts();
        let mut x_new = x.insert_columns(round, 1, 0.0);
        let mut y_new = y.insert_columns(round, 1, 0.0);
        x_new.set_column(round, &(direction.left.column(0) * (m as f64).sqrt()));
        y_new.set_column(round, &(direction.right.column(0) * (n as f64).sqrt()));
        init = match retract(&x_new, &y_new) {
            Ok(pair) => pair,
            Err(Error::Degenerate(msg)) => {
                return Err(Error::Degenerate(format!("residual direction lies in the current span: {msg}")))
            }
            Err(e) => return Err(e),
        };
        round += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::optspace;
    use crate::sparse::ProblemShape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(seed: u64, m: usize, n: usize, r: usize, p: f64) -> (DMatrix<f64>, ObservedMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = DMatrix::from_fn(m, r, |_, _| rng.random_range(-1.0..1.0));
        let v = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
        let dense = u * v.transpose();
        let mut entries = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if rng.random_bool(p) {
                    entries.push((i, j, dense[(i, j)]));
                }
            }
        }
        let obs = ObservedMatrix::new(ProblemShape::new(m, n).unwrap(), entries).unwrap();
        (dense, obs)
    }

    #[test]
    fn rank_one_matches_plain_optspace() {
        let (_, observed) = instance(5, 40, 30, 1, 0.4);
        let config = OptConfig { rho_max: 1, ..OptConfig::default() };
        let inc = incremental_optspace(&observed, &config).unwrap();
        let plain = optspace(&observed, &OptConfig::default(), Some(1)).unwrap();
        assert_eq!(inc.rank(), 1);
        let a = inc.triple.to_dense();
        let b = plain.triple.to_dense();
        assert!((a - &b).norm() / b.norm() < 1e-4);
    }

    #[test]
    fn grows_to_the_true_rank() {
        for mode in [ResidualMode::Observed, ResidualMode::ScaledComposite] {
            let (dense, observed) = instance(6, 60, 60, 3, 0.5);
            let config = OptConfig {
                rho_max: 6,
                tau: 1e-2,
                residual_mode: mode,
                ..OptConfig::default()
            };
            let result = incremental_optspace_with_truth(&observed, &config, Some(&dense)).unwrap();
            assert_eq!(result.stop, StopReason::FitTolerance, "{mode:?}");
            assert_eq!(result.rank(), 3, "{mode:?}");
            assert!(result.trace.last().unwrap().prediction_error.unwrap() < 1e-4);
        }
    }
}
