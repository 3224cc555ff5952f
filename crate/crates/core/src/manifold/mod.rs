//! The OptSpace cost on pairs of subspaces, its gradient, the line search
//! and retraction, and the OptSpace / Incremental OptSpace drivers.

mod config;
mod driver;
mod factors;
mod incremental;
mod line_search;
mod objective;

pub use config::{OptConfig, ResidualMode};
pub use driver::{
    manifold_optimize, optspace, optspace_with_truth, spectral_init, IterationRecord, ManifoldRun, OptSpaceResult,
    StopReason,
};
pub use factors::{retract, FactorPair, FactorTriple, NORMALIZATION_TOL};
pub use incremental::{incremental_optspace, incremental_optspace_with_truth};
pub use line_search::{line_search_step, LineSearchOutcome};
pub use objective::{cost, euclidean_gradient, gradient, objective, solve_core, CoreSolution, CostEval, TangentVector};
