//! Sparse observed matrices, the projector onto an observed pattern, and
//! truncated SVD of sparse (or sparse-minus-low-rank) operators.

mod matrix_market;
mod observed;
mod operator;
mod svd;

pub use matrix_market::{read_matrix_market, write_matrix_market};
pub use observed::{observed_frobenius, project_observed, MatrixLike, ObservedMatrix, ProblemShape};
pub use operator::{LinearOperator, LowRankResidual};
pub use svd::{truncated_svd, SpectralSummary, SvdOptions};
