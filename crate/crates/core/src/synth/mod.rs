//! Random problem instances: low-rank ground truth, Bernoulli observation
//! patterns and the noise models used in the experiments.

mod instance;
mod noise;

pub use instance::{generate_matrix, sample_pattern, Instance, InstanceSpec};
pub use noise::{apply_noise, calibrate_noise_ratio, NoiseFamily, NoiseSpec, OUTLIER_PROBABILITY};
