use crate::error::{Error, Result};

/// How Incremental OptSpace forms the residual whose top singular direction
/// seeds each new round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualMode {
    /// `P_E(M~ - M^)`: the trimmed observations minus the current estimate
    /// restricted to the same entries.
    #[default]
    Observed,
    /// `M~ - p M^` with `p = |E~| / (m n)`, applied as a sparse-minus-low-rank
    /// operator without forming the dense difference.
    ScaledComposite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptConfig {
    /// Stop once `||P_E(M - M^)||_F / ||P_E(M)||_F` drops below this.
    pub delta_tol: f64,
    /// Gradient steps per manifold optimization.
    pub k_max: usize,
    /// First trial step of every line search.
    pub tau: f64,
    /// Weight of the penalty on unobserved entries, in `[0, 1]`.
    pub lambda: f64,
    pub max_halvings: usize,
    /// Slack `s` in the noisy stopping rule `||P_E(M^ - M)||^2 <= (1 + s)|E| sigma^2`.
    pub noise_slack: f64,
    /// Per-entry noise variance; enables the noisy stopping rule.
    pub noise_variance: Option<f64>,
    /// Largest rank Incremental OptSpace grows to.
    pub rho_max: usize,
    pub residual_mode: ResidualMode,
    /// Number of singular values inspected by rank estimation; `None` picks
    /// `min(50, min(m, n) - 1)`.
    pub rank_k_max: Option<usize>,
    /// Residual tolerance of the spectral initialization.
    pub svd_tol: f64,
    /// Seed for the Lanczos start vectors.
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            delta_tol: 1e-5,
            k_max: 1000,
            tau: 1e-3,
            lambda: 0.0,
            max_halvings: 50,
            noise_slack: 0.05,
            noise_variance: None,
            rho_max: 50,
            residual_mode: ResidualMode::default(),
            rank_k_max: None,
            svd_tol: 1e-10,
            seed: 0,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("delta_tol", self.delta_tol),
            ("tau", self.tau),
            ("noise_slack", self.noise_slack),
            ("svd_tol", self.svd_tol),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::config(format!("{name} must be positive and finite, got {value}")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if let Some(v) = self.noise_variance {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("noise variance must be non-negative, got {v}")));
            }
        }
        if self.rho_max == 0 {
            return Err(Error::config("rho_max must be at least 1"));
        }
        Ok(())
    }
}
