use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::manifold::retract;
use crate::rng::{stream, Stream};
use crate::sparse::{ObservedMatrix, ProblemShape};

/// Parameters of a random rank-`r` instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub shape: ProblemShape,
    pub rank: usize,
    /// Mean revealed entries per row; each entry is revealed with
    /// probability `epsilon / sqrt(m n)`.
    pub epsilon: f64,
    /// Standard deviation of the entries of `U` and `V`.
    pub factor_std: f64,
    /// When set, `M = U~ D V~^T` with orthonormal `U~`, `V~` and `D`
    /// linearly spaced from `n` down to `n / kappa`.
    pub kappa: Option<f64>,
    /// When set, `M = U diag(w) V^T`.
    pub column_scales: Option<Vec<f64>>,
    pub seed: u64,
}

impl InstanceSpec {
    /// Gaussian factors with unit variance.
    pub fn new(shape: ProblemShape, rank: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            shape,
            rank,
            epsilon,
            factor_std: 1.0,
            kappa: None,
            column_scales: None,
            seed,
        }
    }

    pub fn square(n: usize, rank: usize, epsilon: f64, seed: u64) -> Result<Self> {
        Ok(Self::new(ProblemShape::square(n)?, rank, epsilon, seed))
    }

    /// Factor entries with variance `20 / sqrt(n)`.
    pub fn standard_scenario(n: usize, rank: usize, epsilon: f64, seed: u64) -> Result<Self> {
        let std = (20.0 / (n as f64).sqrt()).sqrt();
        Ok(Self::square(n, rank, epsilon, seed)?.with_factor_std(std))
    }

    /// Unit-variance factors weighted by `sqrt(r / sum d_k^2) diag(1, 4, 7, ...)`,
    /// which keeps `E ||M||_F` unchanged while spreading the spectrum.
    pub fn ill_conditioned(n: usize, rank: usize, epsilon: f64, seed: u64) -> Result<Self> {
        let d: Vec<f64> = (0..rank).map(|k| 1.0 + 3.0 * k as f64).collect();
        let norm = (rank as f64 / d.iter().map(|x| x * x).sum::<f64>()).sqrt();
        Ok(Self::square(n, rank, epsilon, seed)?.with_column_scales(d.iter().map(|x| x * norm).collect()))
    }

    pub fn with_factor_std(mut self, std: f64) -> Self {
        self.factor_std = std;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = Some(kappa);
        self
    }

    pub fn with_column_scales(mut self, scales: Vec<f64>) -> Self {
        self.column_scales = Some(scales);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Revealing probability of each entry.
    pub fn probability(&self) -> f64 {
        let (m, n) = self.shape.dims();
        self.epsilon / (m as f64 * n as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.shape.dims();
        if self.rank == 0 || self.rank > m.min(n) {
            return Err(Error::config(format!("rank {} outside 1..={}", self.rank, m.min(n))));
        }
        let p = self.probability();
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::config(format!(
                "epsilon {} gives sampling probability {p}, outside (0, 1]",
                self.epsilon
            )));
        }
        if !(self.factor_std > 0.0) || !self.factor_std.is_finite() {
            return Err(Error::config(format!("factor_std must be positive, got {}", self.factor_std)));
        }
        if let Some(k) = self.kappa {
            if !(k >= 1.0) || !k.is_finite() {
                return Err(Error::config(format!("kappa must be at least 1, got {k}")));
            }
            if self.column_scales.is_some() {
                return Err(Error::config("kappa and column_scales are mutually exclusive"));
            }
        }
        if let Some(w) = &self.column_scales {
            if w.len() != self.rank || w.iter().any(|x| !x.is_finite()) {
                return Err(Error::config(format!("need {} finite column scales", self.rank)));
            }
        }
        Ok(())
    }

    /// Line-oriented `key = value` record of the spec.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let (m, n) = self.shape.dims();
        let _ = writeln!(out, "rows = {m}");
        let _ = writeln!(out, "cols = {n}");
        let _ = writeln!(out, "rank = {}", self.rank);
        let _ = writeln!(out, "epsilon = {:?}", self.epsilon);
        let _ = writeln!(out, "factor_std = {:?}", self.factor_std);
        if let Some(k) = self.kappa {
            let _ = writeln!(out, "kappa = {k:?}");
        }
        if let Some(w) = &self.column_scales {
            let list: Vec<String> = w.iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(out, "column_scales = {}", list.join(","));
        }
        let _ = writeln!(out, "seed = {}", self.seed);
        out
    }

    /// Parses the output of [`InstanceSpec::to_key_values`]; unknown keys
    /// are ignored.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            map.insert(k.trim().to_string(), (idx + 1, v.trim().to_string()));
        }
        fn get<T: std::str::FromStr>(map: &BTreeMap<String, (usize, String)>, key: &str) -> Result<Option<T>> {
            match map.get(key) {
                None => Ok(None),
                Some((line, v)) => v.parse().map(Some).map_err(|_| Error::Parse {
                    line: *line,
                    message: format!("bad value for {key}: {v:?}"),
                }),
            }
        }
        let need = |key: &str| Error::Parse {
            line: 0,
            message: format!("missing key {key}"),
        };
        let rows: usize = get(&map, "rows")?.ok_or_else(|| need("rows"))?;
        let cols: usize = get(&map, "cols")?.ok_or_else(|| need("cols"))?;
        let mut spec = Self::new(
            ProblemShape::new(rows, cols)?,
            get(&map, "rank")?.ok_or_else(|| need("rank"))?,
            get(&map, "epsilon")?.ok_or_else(|| need("epsilon"))?,
            get(&map, "seed")?.unwrap_or(0),
        );
        if let Some(std) = get(&map, "factor_std")? {
            spec.factor_std = std;
        }
        spec.kappa = get(&map, "kappa")?;
        if let Some((line, v)) = map.get("column_scales") {
            let scales: std::result::Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse()).collect();
            spec.column_scales = Some(scales.map_err(|_| Error::Parse {
                line: *line,
                message: format!("bad column_scales {v:?}"),
            })?);
        }
        Ok(spec)
    }
}

/// Ground truth `M = L R^T` with its factors.
#[derive(Debug, Clone)]
pub struct Instance {
    pub matrix: DMatrix<f64>,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

fn gaussian_block(rows: usize, cols: usize, std: f64, seed: u64, purpose: Stream) -> DMatrix<f64> {
    let mut rng = stream(seed, purpose);
    let normal = Normal::new(0.0, std).expect("standard deviation validated");
    DMatrix::from_fn(rows, cols, |_, _| normal.sample(&mut rng))
}

/// Draws the ground-truth matrix described by `spec`.
pub fn generate_matrix(spec: &InstanceSpec) -> Result<Instance> {
    spec.validate()?;
    let (m, n) = spec.shape.dims();
    let r = spec.rank;
    let u = gaussian_block(m, r, spec.factor_std, spec.seed, Stream::LeftFactor);
    let v = gaussian_block(n, r, spec.factor_std, spec.seed, Stream::RightFactor);
    let (left, right) = if let Some(kappa) = spec.kappa {
        let pair = retract(&u, &v)?;
        let (x, y) = pair.into_parts();
        let top = n as f64;
        let d: Vec<f64> = (0..r)
            .map(|k| {
                if r == 1 {
                    top
                } else {
                    top + (top / kappa - top) * k as f64 / (r - 1) as f64
                }
            })
            .collect();
        let mut left = x / (m as f64).sqrt();
        for (k, dk) in d.iter().enumerate() {
            left.column_mut(k).scale_mut(*dk);
        }
        (left, y / (n as f64).sqrt())
    } else if let Some(w) = &spec.column_scales {
        let mut left = u;
        for (k, wk) in w.iter().enumerate() {
            left.column_mut(k).scale_mut(*wk);
        }
        (left, v)
    } else {
        (u, v)
    };
    Ok(Instance {
        matrix: &left * right.transpose(),
        left,
        right,
    })
}

fn bernoulli_pattern(shape: ProblemShape, p: f64, seed: u64, purpose: Stream) -> Result<ObservedMatrix> {
    let (m, n) = shape.dims();
    let mut rng = stream(seed, purpose);
    let mut positions = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if p >= 1.0 || rng.random::<f64>() < p {
                positions.push((i, j));
            }
        }
    }
    ObservedMatrix::pattern(shape, positions)
}

/// Reveals each entry independently with probability `epsilon / sqrt(m n)`.
///
/// An empty draw is retried once on an independent stream before giving up.
pub fn sample_pattern(shape: ProblemShape, epsilon: f64, seed: u64) -> Result<ObservedMatrix> {
    let (m, n) = shape.dims();
    let p = epsilon / (m as f64 * n as f64).sqrt();
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::config(format!(
            "epsilon {epsilon} gives sampling probability {p}, outside (0, 1]"
        )));
    }
    let first = bernoulli_pattern(shape, p, seed, Stream::Pattern)?;
    if !first.is_empty() {
        return Ok(first);
    }
    let second = bernoulli_pattern(shape, p, seed, Stream::PatternRetry)?;
    if second.is_empty() {
        return Err(Error::degenerate(format!("no entries revealed at epsilon = {epsilon}")));
    }
    Ok(second)
}
