//! Low-rank matrix completion with OptSpace.
//!
//! The pipeline trims over-represented rows and columns of the observed
//! matrix, estimates the rank from its singular-value gap, initializes from
//! the top singular vectors, and refines by gradient descent on a product of
//! Grassmann manifolds. [`incremental_optspace`] grows the rank one
//! direction at a time, which helps on ill-conditioned targets.
//!
//! ```
//! use nalgebra::DMatrix;
//! use optspace::{optspace, ObservedMatrix, OptConfig, ProblemShape};
//!
//! let truth = DMatrix::from_fn(20, 15, |i, j| (i as f64 + 1.0) * (j as f64 - 7.0));
//! let entries = (0..20)
//!     .flat_map(|i| (0..15).map(move |j| (i, j)))
//!     .filter(|(i, j)| (i * 7 + j * 3) % 4 != 0)
//!     .map(|(i, j)| (i, j, truth[(i, j)]));
//! let observed = ObservedMatrix::new(ProblemShape::new(20, 15)?, entries)?;
//! let result = optspace(&observed, &OptConfig::default(), Some(1))?;
//! let err = (result.triple.to_dense() - &truth).norm() / truth.norm();
//! assert!(err < 1e-4);
//! # Ok::<(), optspace::Error>(())
//! ```

// NaN must fail range checks, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod manifold;
pub mod metrics;
pub mod preprocess;
pub mod rng;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
pub use manifold::{
    incremental_optspace, optspace, FactorPair, FactorTriple, IterationRecord, OptConfig, OptSpaceResult, StopReason,
};
pub use sparse::{MatrixLike, ObservedMatrix, ProblemShape, SpectralSummary};
