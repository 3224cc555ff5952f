use super::objective::{cost, CostEval, TangentVector};
use super::{retract, FactorPair, FactorTriple};
use crate::error::{Error, Result};
use crate::sparse::ObservedMatrix;

#[derive(Debug, Clone)]
pub enum LineSearchOutcome {
    Accepted {
        factors: FactorPair,
        /// Cost at `factors`, with its minimizing core.
        eval: CostEval,
        /// Accepted step `t = tau * 2^-h`.
        step: f64,
    },
    /// No step up to `max_halvings` halvings gave sufficient decrease.
    Stalled { last_step: f64 },
}

/// Backtracking search along `-w` from `triple`, whose cost is `current_cost`.
///
/// Accepts the first `t = tau * 2^-h` with
/// `F(R(x - t w)) - F(x) <= -t/2 ||w||^2`, where `R` is the QR retraction.
#[allow(clippy::too_many_arguments)]
pub fn line_search_step(
    observed: &ObservedMatrix,
    triple: &FactorTriple,
    current_cost: f64,
    w: &TangentVector,
    tau: f64,
    max_halvings: usize,
    lambda: f64,
) -> Result<LineSearchOutcome> {
    let norm_sq = w.norm_sq();
    if !(norm_sq > 0.0) || !norm_sq.is_finite() {
        return Err(Error::Precondition(format!(
            "line search needs a finite nonzero direction, got ||w||^2 = {norm_sq}"
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::config(format!("tau must be positive, got {tau}")));
    }
    let mut t = tau;
    for _ in 0..=max_halvings {
        let x = triple.x() - &w.x * t;
        let y = triple.y() - &w.y * t;
        // a retraction failure means the step collapsed a column; shrink it
        if let Ok(candidate) = retract(&x, &y) {
            let eval = cost(observed, &candidate, lambda)?;
            if eval.value - current_cost <= -0.5 * t * norm_sq {
                return Ok(LineSearchOutcome::Accepted {
                    factors: candidate,
                    eval,
                    step: t,
                });
            }
        }
        t *= 0.5;
    }
    Ok(LineSearchOutcome::Stalled { last_step: t * 2.0 })
}
