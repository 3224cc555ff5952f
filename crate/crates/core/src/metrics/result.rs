/// Relative error at or below which a trial counts as reconstructed.
pub const RECONSTRUCTION_THRESHOLD: f64 = 1e-4;

/// Metrics of one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rel_error: f64,
    pub rmse: f64,
    pub fit_error: f64,
    pub iterations: usize,
    pub wall_time_seconds: f64,
    pub r_hat: usize,
    pub seed: u64,
    pub reconstructed: bool,
}

impl ExperimentResult {
    /// Column order of [`ExperimentResult::csv_fields`]. Wall time is left out
    /// so that reruns reproduce identical rows.
    pub const CSV_COLUMNS: [&'static str; 7] =
        ["seed", "r_hat", "iterations", "rel_error", "rmse", "fit_error", "reconstructed"];

    pub fn new(
        rel_error: f64,
        rmse: f64,
        fit_error: f64,
        iterations: usize,
        wall_time_seconds: f64,
        r_hat: usize,
        seed: u64,
    ) -> Self {
        Self::with_threshold(rel_error, rmse, fit_error, iterations, wall_time_seconds, r_hat, seed, RECONSTRUCTION_THRESHOLD)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_threshold(
        rel_error: f64,
        rmse: f64,
        fit_error: f64,
        iterations: usize,
        wall_time_seconds: f64,
        r_hat: usize,
        seed: u64,
        threshold: f64,
    ) -> Self {
        Self {
            rel_error,
            rmse,
            fit_error,
            iterations,
            wall_time_seconds,
            r_hat,
            seed,
            reconstructed: rel_error <= threshold,
        }
    }

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.r_hat.to_string(),
            self.iterations.to_string(),
            format!("{:e}", self.rel_error),
            format!("{:e}", self.rmse),
            format!("{:e}", self.fit_error),
            u8::from(self.reconstructed).to_string(),
        ]
    }
}
