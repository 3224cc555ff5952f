use nalgebra::DMatrix;

use super::line_search::{line_search_step, LineSearchOutcome};
use super::objective::{cost, gradient, CostEval};
use super::{retract, FactorPair, FactorTriple, OptConfig};
use crate::error::{Error, Result};
use crate::preprocess::{default_k_max, estimate_rank, trim, RankEstimate, TrimReport};
use crate::sparse::{truncated_svd, ObservedMatrix, SvdOptions};

/// State after one gradient step (iteration 0 is the initial point).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    /// `||P_E(M - M^)||_F / ||P_E(M)||_F`.
    pub fit_error: f64,
    /// Accepted step size; zero at the initial point.
    pub step: f64,
    /// `||M - M^||_F / ||M||_F`, only when the ground truth is supplied.
    pub prediction_error: Option<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Relative fit error fell below `delta_tol`.
    FitTolerance,
    /// Observed residual reached the supplied noise level.
    NoiseLevel,
    /// `|F(x_k+1) - F(x_k)| <= delta_tol F(x_k)` (Incremental OptSpace rounds).
    RelativeDecrease,
    MaxIterations,
    /// The line search exhausted its halvings without sufficient decrease.
    Stalled,
    /// The projected gradient vanished.
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Criterion {
    Fit,
    RelativeDecrease,
}

#[derive(Debug, Clone)]
pub struct ManifoldRun {
    pub triple: FactorTriple,
    pub trace: Vec<IterationRecord>,
    pub stop: StopReason,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct OptSpaceResult {
    pub triple: FactorTriple,
    pub trace: Vec<IterationRecord>,
    pub stop: StopReason,
    pub trim: TrimReport,
    /// `None` when the rank was supplied by the caller.
    pub rank_estimate: Option<RankEstimate>,
}

impl OptSpaceResult {
    pub fn rank(&self) -> usize {
        self.triple.rank()
    }

    /// Gradient steps taken.
    pub fn iterations(&self) -> usize {
        self.trace.last().map_or(0, |r| r.iteration)
    }

    pub fn fit_error(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.fit_error)
    }
}

pub(crate) struct Tracker<'a> {
    observed: &'a ObservedMatrix,
    observed_norm: f64,
    truth: Option<(&'a DMatrix<f64>, f64)>,
    config: &'a OptConfig,
    pub(crate) trace: Vec<IterationRecord>,
    pub(crate) next_iteration: usize,
}

impl<'a> Tracker<'a> {
    pub(crate) fn new(observed: &'a ObservedMatrix, config: &'a OptConfig, truth: Option<&'a DMatrix<f64>>) -> Result<Self> {
        let observed_norm = observed.frobenius_norm();
        if observed_norm == 0.0 {
            return Err(Error::degenerate("observed entries are all zero"));
        }
        if let Some(t) = truth {
            observed.shape().check(t.shape())?;
        }
        Ok(Self {
            observed,
            observed_norm,
            truth: truth.map(|t| (t, t.norm())),
            config,
            trace: Vec::new(),
            next_iteration: 0,
        })
    }

    fn record(&mut self, triple: &FactorTriple, eval: &CostEval, step: f64) -> IterationRecord {
        let prediction_error = self.truth.map(|(t, norm)| {
            let estimate = triple.to_dense();
            (t - estimate).norm() / norm
        });
        let rec = IterationRecord {
            iteration: self.next_iteration,
            cost: eval.value,
            fit_error: eval.observed_residual_sq.sqrt() / self.observed_norm,
            step,
            prediction_error,
            rank: triple.rank(),
        };
        self.next_iteration += 1;
        self.trace.push(rec.clone());
        rec
    }

    fn converged(&self, rec: &IterationRecord, eval: &CostEval) -> Option<StopReason> {
        if rec.fit_error < self.config.delta_tol {
            return Some(StopReason::FitTolerance);
        }
        if let Some(var) = self.config.noise_variance {
            let budget = (1.0 + self.config.noise_slack) * self.observed.nnz() as f64 * var;
            if eval.observed_residual_sq <= budget {
                return Some(StopReason::NoiseLevel);
            }
        }
        None
    }

    pub(crate) fn into_trace(self) -> Vec<IterationRecord> {
        self.trace
    }

    fn fail(&self, source: Error) -> Error {
        Error::OptimizationFailed {
            source: Box::new(source),
            trace: self.trace.clone(),
        }
    }
}

// Gradient descent from `init` until the chosen criterion, the noise rule,
// `k_max` steps, or a stalled line search.
pub(crate) fn descend(
    tracker: &mut Tracker<'_>,
    init: FactorPair,
    criterion: Criterion,
) -> Result<ManifoldRun> {
    let observed = tracker.observed;
    let config = tracker.config;
    let lambda = config.lambda;
    let mut eval = cost(observed, &init, lambda).map_err(|e| tracker.fail(e))?;
    let mut triple = FactorTriple::new(init, eval.core.clone())?;
    let start = tracker.trace.len();
    let rec = tracker.record(&triple, &eval, 0.0);
    if let Some(stop) = tracker.converged(&rec, &eval) {
        let trace = tracker.trace[start..].to_vec();
        return Ok(ManifoldRun { triple, trace, stop, cost: eval.value });
    }
    let mut stop = StopReason::MaxIterations;
    for _ in 0..config.k_max {
        let w = gradient(observed, &triple, lambda).map_err(|e| tracker.fail(e))?;
        let wn = w.norm_sq();
        if !(wn > 0.0) {
            stop = StopReason::Stationary;
            break;
        }
        let outcome = line_search_step(observed, &triple, eval.value, &w, config.tau, config.max_halvings, lambda)
            .map_err(|e| tracker.fail(e))?;
        let LineSearchOutcome::Accepted { factors, eval: next, step } = outcome else {
            stop = StopReason::Stalled;
            break;
        };
        let previous = eval.value;
        triple = FactorTriple::new(factors, next.core.clone())?;
        eval = next;
        let rec = tracker.record(&triple, &eval, step);
        if let Some(s) = tracker.converged(&rec, &eval) {
            stop = s;
            break;
        }
        if criterion == Criterion::RelativeDecrease && (previous - eval.value).abs() <= config.delta_tol * previous {
            stop = StopReason::RelativeDecrease;
            break;
        }
    }
    Ok(ManifoldRun {
        triple,
        trace: tracker.trace[start..].to_vec(),
        stop,
        cost: eval.value,
    })
}

/// Manifold Optimization: gradient descent on `F` from `init` with the
/// fit-tolerance, noise, iteration-cap and stall stopping rules.
///
/// `truth` adds prediction errors to the trace.
pub fn manifold_optimize(
    observed: &ObservedMatrix,
    init: FactorPair,
    config: &OptConfig,
    truth: Option<&DMatrix<f64>>,
) -> Result<ManifoldRun> {
    config.validate()?;
    let mut tracker = Tracker::new(observed, config, truth)?;
    descend(&mut tracker, init, Criterion::Fit)
}

/// `sqrt(m) [x_1 .. x_r]`, `sqrt(n) [y_1 .. y_r]` from the top `r` singular
/// vectors of the trimmed matrix.
pub fn spectral_init(trimmed: &ObservedMatrix, r: usize, svd: &SvdOptions) -> Result<FactorPair> {
    let (m, n) = trimmed.shape().dims();
    if r == 0 || r > m.min(n) {
        return Err(Error::config(format!("rank {r} outside 1..={}", m.min(n))));
    }
    let summary = truncated_svd(trimmed, r, svd)?;
    // retract only normalizes here; the singular vectors are already orthonormal
    retract(&(summary.left * (m as f64).sqrt()), &(summary.right * (n as f64).sqrt()))
}

pub(crate) fn svd_options(config: &OptConfig) -> SvdOptions {
    SvdOptions {
        tol: config.svd_tol,
        seed: config.seed,
        max_iterations: None,
    }
}

/// OptSpace: trim, estimate the rank (unless `rank_override`), project onto
/// the top singular vectors, then run Manifold Optimization on `observed`.
pub fn optspace(observed: &ObservedMatrix, config: &OptConfig, rank_override: Option<usize>) -> Result<OptSpaceResult> {
    optspace_with_truth(observed, config, rank_override, None)
}

/// [`optspace`] recording `||M - M^||_F / ||M||_F` at every iteration.
pub fn optspace_with_truth(
    observed: &ObservedMatrix,
    config: &OptConfig,
    rank_override: Option<usize>,
    truth: Option<&DMatrix<f64>>,
) -> Result<OptSpaceResult> {
    config.validate()?;
    let report = trim(observed)?;
    let svd = svd_options(config);
    let (r, rank_estimate) = match rank_override {
        Some(r) => (r, None),
        None => {
            let k_max = config.rank_k_max.unwrap_or_else(|| default_k_max(observed.shape()));
            let est = estimate_rank(&report.trimmed, k_max, &svd)?;
            (est.r_hat, Some(est))
        }
    };
    let init = spectral_init(&report.trimmed, r, &svd)?;
    let mut tracker = Tracker::new(observed, config, truth)?;
    let run = descend(&mut tracker, init, Criterion::Fit)?;
    Ok(OptSpaceResult {
        triple: run.triple,
        trace: tracker.into_trace(),
        stop: run.stop,
        trim: report,
        rank_estimate,
    })
}
