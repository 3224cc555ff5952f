//! Experiment harness for `optspace`: synthetic benchmark suites, ratings
//! evaluation and incoherence reports, all written as CSV.

// NaN must fail range checks, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod plan;
pub mod ratings;
pub mod run;

pub use error::{CliError, CliResult};
pub use plan::{ExperimentPlan, Grid, GridPoint, PlanKind, RankMode, SolverKind};
pub use ratings::{load_ratings, ratings_eval, HoldoutRule, NmaeReport, RatingsDataset, RatingsFormat};
pub use run::{run_plan, RunReport};
