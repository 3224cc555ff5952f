//! Fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use optspace::synth::{apply_noise, generate_matrix, sample_pattern, InstanceSpec, NoiseSpec};
use optspace::ObservedMatrix;

/// A noiseless `n x n` rank-`r` instance with `eps * n` observed entries.
pub fn fixture(n: usize, r: usize, eps: f64, seed: u64) -> (DMatrix<f64>, ObservedMatrix) {
    let spec = InstanceSpec::square(n, r, eps, seed).expect("valid instance");
    let truth = generate_matrix(&spec).expect("generated").matrix;
    let pattern = sample_pattern(spec.shape, eps, seed).expect("sampled");
    let observed = apply_noise(&truth, &pattern, &NoiseSpec::None, seed).expect("observed");
    (truth, observed)
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_has_expected_density() {
        let (truth, obs) = super::fixture(200, 3, 20.0, 1);
        assert_eq!(truth.shape(), (200, 200));
        let per_row = obs.nnz() as f64 / 200.0;
        assert!((per_row - 20.0).abs() < 3.0, "{per_row}");
    }
}
