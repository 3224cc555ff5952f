//! Trimming of over-represented rows and columns, and rank estimation from
//! the singular-value gap of the trimmed matrix.

mod rank;
mod trim;

pub use rank::{default_k_max, estimate_rank, rank_from_spectrum, RankEstimate};
pub use trim::{trim, TrimReport};
