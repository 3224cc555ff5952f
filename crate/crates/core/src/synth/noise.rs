use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::sparse::{MatrixLike, ObservedMatrix};

/// Probability of each sign in the default outlier model.
pub const OUTLIER_PROBABILITY: f64 = 1.0 / 200.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    None,
    /// `Z_ij ~ N(0, sigma^2)`.
    AdditiveGaussian { sigma: f64 },
    /// `Z_ij = xi_ij M_ij` with `xi_ij ~ N(0, xi_std^2)`.
    MultiplicativeGaussian { xi_std: f64 },
    /// `Z_ij = +a` w.p. `p_pos`, `-a` w.p. `p_neg`, else 0.
    Outliers { a: f64, p_pos: f64, p_neg: f64 },
    /// Observations rounded to the grid `{..., -a/2, a/2, 3a/2, ...}`.
    Quantization { a: f64 },
}

impl NoiseSpec {
    pub fn outliers(a: f64) -> Self {
        NoiseSpec::Outliers {
            a,
            p_pos: OUTLIER_PROBABILITY,
            p_neg: OUTLIER_PROBABILITY,
        }
    }

    pub fn family(&self) -> Option<NoiseFamily> {
        match self {
            NoiseSpec::None => None,
            NoiseSpec::AdditiveGaussian { .. } => Some(NoiseFamily::Additive),
            NoiseSpec::MultiplicativeGaussian { .. } => Some(NoiseFamily::Multiplicative),
            NoiseSpec::Outliers { .. } => Some(NoiseFamily::Outliers),
            NoiseSpec::Quantization { .. } => Some(NoiseFamily::Quantization),
        }
    }

    /// Per-entry variance for additive Gaussian noise, the only family for
    /// which it does not depend on the matrix.
    pub fn variance(&self) -> Option<f64> {
        match self {
            NoiseSpec::None => Some(0.0),
            NoiseSpec::AdditiveGaussian { sigma } => Some(sigma * sigma),
            NoiseSpec::Outliers { a, p_pos, p_neg } => Some(a * a * (p_pos + p_neg)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::AdditiveGaussian { sigma } => positive("sigma", sigma),
            NoiseSpec::MultiplicativeGaussian { xi_std } => positive("xi_std", xi_std),
            NoiseSpec::Quantization { a } => positive("a", a),
            NoiseSpec::Outliers { a, p_pos, p_neg } => {
                positive("a", a)?;
                if !(p_pos >= 0.0 && p_neg >= 0.0 && p_pos + p_neg <= 1.0) {
                    return Err(Error::config(format!("outlier probabilities {p_pos}, {p_neg} invalid")));
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSpec::None => write!(f, "none"),
            NoiseSpec::AdditiveGaussian { sigma } => write!(f, "additive(sigma={sigma:?})"),
            NoiseSpec::MultiplicativeGaussian { xi_std } => write!(f, "multiplicative(xi_std={xi_std:?})"),
            NoiseSpec::Outliers { a, p_pos, p_neg } => write!(f, "outliers(a={a:?},p_pos={p_pos:?},p_neg={p_neg:?})"),
            NoiseSpec::Quantization { a } => write!(f, "quantization(a={a:?})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseFamily {
    Additive,
    Multiplicative,
    Outliers,
    Quantization,
}

impl std::str::FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" | "gaussian" => Ok(NoiseFamily::Additive),
            "multiplicative" => Ok(NoiseFamily::Multiplicative),
            "outliers" => Ok(NoiseFamily::Outliers),
            "quantization" => Ok(NoiseFamily::Quantization),
            _ => Err(Error::config(format!("unknown noise family {s:?}"))),
        }
    }
}

fn quantize(v: f64, a: f64) -> f64 {
    // nearest point of a/2 + a Z
    ((v - a / 2.0) / a).round() * a + a / 2.0
}

/// Observations `M_ij + Z_ij` at the positions of `pattern`.
pub fn apply_noise<T: MatrixLike + ?Sized>(
    truth: &T,
    pattern: &ObservedMatrix,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<ObservedMatrix> {
    noise.validate()?;
    pattern.shape().check(truth.dims())?;
    let clean = truth.values_on(pattern);
    let mut rng = stream(seed, Stream::Noise);
    let values: Vec<f64> = match *noise {
        NoiseSpec::None => clean,
        NoiseSpec::AdditiveGaussian { sigma } => {
            let normal = Normal::new(0.0, sigma).expect("validated");
            clean.into_iter().map(|m| m + normal.sample(&mut rng)).collect()
        }
        NoiseSpec::MultiplicativeGaussian { xi_std } => {
            let normal = Normal::new(0.0, xi_std).expect("validated");
            clean.into_iter().map(|m| m + normal.sample(&mut rng) * m).collect()
        }
        NoiseSpec::Outliers { a, p_pos, p_neg } => clean
            .into_iter()
            .map(|m| {
                let u: f64 = rng.random();
                if u < p_pos {
                    m + a
                } else if u < p_pos + p_neg {
                    m - a
                } else {
                    m
                }
            })
            .collect(),
        NoiseSpec::Quantization { a } => clean.into_iter().map(|m| quantize(m, a)).collect(),
    };
    pattern.with_values(values)
}

fn quantization_ratio(clean: &[f64], norm: f64, a: f64) -> f64 {
    clean.iter().map(|&m| (quantize(m, a) - m).powi(2)).sum::<f64>().sqrt() / norm
}

/// Scale parameter giving noise ratio `||P_E(Z)||_F / ||P_E(M)||_F = target`.
///
/// Additive, multiplicative and outlier noise match the target in
/// expectation given the measured `||P_E(M)||_F`; quantization is
/// deterministic and matched by bisection on the measured ratio.
pub fn calibrate_noise_ratio(truth: &DMatrix<f64>, pattern: &ObservedMatrix, family: NoiseFamily, target: f64) -> Result<NoiseSpec> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::config(format!("target noise ratio must be positive, got {target}")));
    }
    pattern.shape().check(truth.shape())?;
    let clean = truth.values_on(pattern);
    let norm = clean.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || pattern.is_empty() {
        return Err(Error::degenerate("ground truth vanishes on the observed pattern"));
    }
    let rms = norm / (pattern.nnz() as f64).sqrt();
    Ok(match family {
        NoiseFamily::Additive => NoiseSpec::AdditiveGaussian { sigma: target * rms },
        NoiseFamily::Multiplicative => NoiseSpec::MultiplicativeGaussian { xi_std: target },
        NoiseFamily::Outliers => {
            let p = 2.0 * OUTLIER_PROBABILITY;
            NoiseSpec::outliers(target * rms / p.sqrt())
        }
        NoiseFamily::Quantization => {
            // the ratio is roughly a / (sqrt(12) rms) for fine grids
            let mut lo = 0.0;
            let mut hi = 4.0 * target * rms * 12f64.sqrt();
            while quantization_ratio(&clean, norm, hi) < target {
                hi *= 2.0;
                if hi > 1e6 * rms {
                    return Err(Error::degenerate(format!("quantization cannot reach noise ratio {target}")));
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if quantization_ratio(&clean, norm, mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-14 * hi {
                    break;
                }
            }
            NoiseSpec::Quantization { a: 0.5 * (lo + hi) }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{project_observed, ProblemShape};
    use crate::synth::{generate_matrix, sample_pattern, InstanceSpec};

    fn setup(n: usize, eps: f64, seed: u64) -> (DMatrix<f64>, ObservedMatrix) {
        let spec = InstanceSpec::square(n, 4, eps, seed).unwrap();
        let inst = generate_matrix(&spec).unwrap();
        let pattern = sample_pattern(spec.shape, eps, seed).unwrap();
        (inst.matrix, pattern)
    }

    fn measured_ratio(truth: &DMatrix<f64>, noisy: &ObservedMatrix) -> f64 {
        let clean = truth.values_on(noisy);
        let z: f64 = noisy.values().iter().zip(&clean).map(|(a, b)| (a - b).powi(2)).sum();
        let m: f64 = clean.iter().map(|v| v * v).sum();
        (z / m).sqrt()
    }

    #[test]
    fn no_noise_is_projection() {
        let (truth, pattern) = setup(30, 10.0, 1);
        let noisy = apply_noise(&truth, &pattern, &NoiseSpec::None, 1).unwrap();
        assert_eq!(noisy, project_observed(&truth, &pattern).unwrap());
    }

    #[test]
    fn quantized_values_lie_on_grid() {
        let (truth, pattern) = setup(40, 20.0, 2);
        let a = 0.7;
        let noisy = apply_noise(&truth, &pattern, &NoiseSpec::Quantization { a }, 2).unwrap();
        for (i, j, v) in noisy.iter() {
            let k = (v - a / 2.0) / a;
            assert!((k - k.round()).abs() < 1e-9);
            assert!((v - truth[(i, j)]).abs() <= a / 2.0 + 1e-12);
        }
    }

    #[test]
    fn outlier_frequency() {
        let (truth, pattern) = setup(200, 100.0, 3);
        assert!(pattern.nnz() >= 10_000);
        let noisy = apply_noise(&truth, &pattern, &NoiseSpec::outliers(10.0), 3).unwrap();
        let hits = noisy
            .iter()
            .filter(|&(i, j, v)| ((v - truth[(i, j)]).abs() - 10.0).abs() < 1e-9)
            .count();
        let frac = hits as f64 / noisy.nnz() as f64;
        assert!((0.005..=0.015).contains(&frac), "{frac}");
    }

    #[test]
    fn unit_factor_scenario_calibration() {
        // rank 4, unit-variance factors: E M_ij^2 = 4, so N = sigma/2 and N = a/20
        let (truth, pattern) = setup(500, 80.0, 4);
        match calibrate_noise_ratio(&truth, &pattern, NoiseFamily::Additive, 0.5).unwrap() {
            NoiseSpec::AdditiveGaussian { sigma } => assert!((sigma - 1.0).abs() < 0.05, "{sigma}"),
            other => panic!("{other:?}"),
        }
        match calibrate_noise_ratio(&truth, &pattern, NoiseFamily::Outliers, 0.5).unwrap() {
            NoiseSpec::Outliers { a, .. } => assert!((a - 10.0).abs() < 0.5, "{a}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn calibrated_ratios_hit_target() {
        let families = [
            NoiseFamily::Additive,
            NoiseFamily::Multiplicative,
            NoiseFamily::Outliers,
            NoiseFamily::Quantization,
        ];
        let mut sums = [0.0; 4];
        for seed in 0..20 {
            let (truth, pattern) = setup(200, 60.0, 10 + seed);
            for (k, family) in families.into_iter().enumerate() {
                let spec = calibrate_noise_ratio(&truth, &pattern, family, 0.5).unwrap();
                let noisy = apply_noise(&truth, &pattern, &spec, seed).unwrap();
                let n = measured_ratio(&truth, &noisy);
                sums[k] += n / 20.0;
                // outlier counts are binomial with mean |E|/100, so single
                // draws scatter by several percent
                if family != NoiseFamily::Outliers {
                    assert!((n - 0.5).abs() <= 0.05 * 0.5, "{family:?} {n}");
                }
            }
        }
        for (family, mean) in families.iter().zip(sums) {
            assert!((mean - 0.5).abs() <= 0.05 * 0.5, "{family:?} {mean}");
        }
    }

    #[test]
    fn zero_truth_is_rejected() {
        let truth = DMatrix::zeros(4, 4);
        let pattern = ObservedMatrix::pattern(ProblemShape::square(4).unwrap(), [(0, 0)]).unwrap();
        assert!(calibrate_noise_ratio(&truth, &pattern, NoiseFamily::Additive, 0.1).is_err());
    }
}
