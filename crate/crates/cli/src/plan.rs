//! Experiment plans: which suite to run, over which grid, with which solver.
//!
//! Plans are read from a line-oriented `key = value` file. Every key can also
//! be set from the command line, and later assignments win.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use optspace::synth::NoiseFamily;
use optspace::OptConfig;

use crate::error::{CliError, CliResult};
use crate::ratings::{HoldoutRule, RatingsFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    Convergence,
    PhaseDiagram,
    HardEasyTable,
    NoiseTable,
    NoiseModelSweep,
    ConditionSweep,
    RatingsEval,
    IncoherenceReport,
}

impl PlanKind {
    pub const ALL: [PlanKind; 8] = [
        PlanKind::Convergence,
        PlanKind::PhaseDiagram,
        PlanKind::HardEasyTable,
        PlanKind::NoiseTable,
        PlanKind::NoiseModelSweep,
        PlanKind::ConditionSweep,
        PlanKind::RatingsEval,
        PlanKind::IncoherenceReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlanKind::Convergence => "convergence",
            PlanKind::PhaseDiagram => "phase_diagram",
            PlanKind::HardEasyTable => "hard_easy_table",
            PlanKind::NoiseTable => "noise_table",
            PlanKind::NoiseModelSweep => "noise_model_sweep",
            PlanKind::ConditionSweep => "condition_sweep",
            PlanKind::RatingsEval => "ratings_eval",
            PlanKind::IncoherenceReport => "incoherence_report",
        }
    }

    /// Kinds that generate synthetic instances and solve them.
    pub fn is_synthetic_solve(self) -> bool {
        !matches!(self, PlanKind::RatingsEval | PlanKind::IncoherenceReport)
    }
}

impl fmt::Display for PlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlanKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let norm = s.trim().replace('-', "_");
        PlanKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| CliError::plan(format!("unknown plan kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    OptSpace,
    Incremental,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::OptSpace => "optspace",
            SolverKind::Incremental => "incremental",
        }
    }
}

impl FromStr for SolverKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim() {
            "optspace" => Ok(SolverKind::OptSpace),
            "incremental" => Ok(SolverKind::Incremental),
            _ => Err(CliError::plan(format!("unknown solver {s:?}"))),
        }
    }
}

/// Rank handed to the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    /// Rank Estimation on the trimmed matrix.
    Estimate,
    /// The rank the instance was generated with.
    True,
    Fixed(usize),
}

impl FromStr for RankMode {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim() {
            "estimate" => Ok(RankMode::Estimate),
            "true" => Ok(RankMode::True),
            v => match v.parse::<usize>() {
                Ok(r) if r > 0 => Ok(RankMode::Fixed(r)),
                _ => Err(CliError::plan(format!("rank must be estimate, true or a positive integer, got {s:?}"))),
            },
        }
    }
}

impl fmt::Display for RankMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankMode::Estimate => f.write_str("estimate"),
            RankMode::True => f.write_str("true"),
            RankMode::Fixed(r) => write!(f, "{r}"),
        }
    }
}

pub fn family_name(family: NoiseFamily) -> &'static str {
    match family {
        NoiseFamily::Additive => "additive",
        NoiseFamily::Multiplicative => "multiplicative",
        NoiseFamily::Outliers => "outliers",
        NoiseFamily::Quantization => "quantization",
    }
}

/// Parameter lists; runs cover their cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n: Vec<usize>,
    pub r: Vec<usize>,
    pub epsilon: Vec<f64>,
    /// Target noise ratios; 0 means noiseless.
    pub noise_ratio: Vec<f64>,
    /// Condition numbers; 0 means plain Gaussian factors.
    pub kappa: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub n: usize,
    pub r: usize,
    pub epsilon: f64,
    pub noise_ratio: f64,
    pub kappa: f64,
}

impl Grid {
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &r in &self.r {
                for &epsilon in &self.epsilon {
                    for &noise_ratio in &self.noise_ratio {
                        for &kappa in &self.kappa {
                            out.push(GridPoint {
                                n,
                                r,
                                epsilon,
                                noise_ratio,
                                kappa,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Where ratings come from for `ratings_eval` and, optionally,
/// `incoherence_report`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsSource {
    pub path: PathBuf,
    pub format: RatingsFormat,
    pub holdout: HoldoutRule,
    pub bounds: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub kind: PlanKind,
    pub grid: Grid,
    pub trials: usize,
    pub seed: u64,
    pub solver: SolverKind,
    pub rank: RankMode,
    pub noise_family: NoiseFamily,
    /// Hand the true noise variance to the solver's stopping rule when it is known.
    pub noise_stop: bool,
    pub config: OptConfig,
    pub output_path: PathBuf,
    pub data: Option<PathBuf>,
    pub format: Option<RatingsFormat>,
    pub holdout_k: usize,
    pub test_file: Option<PathBuf>,
    pub bounds: (Option<f64>, Option<f64>),
}

impl ExperimentPlan {
    /// Desk-scale defaults for each suite.
    pub fn defaults(kind: PlanKind) -> Self {
        let grid = |n: &[usize], r: &[usize], eps: &[f64], nr: &[f64], kappa: &[f64]| Grid {
            n: n.to_vec(),
            r: r.to_vec(),
            epsilon: eps.to_vec(),
            noise_ratio: nr.to_vec(),
            kappa: kappa.to_vec(),
        };
        let (g, trials, rank) = match kind {
            PlanKind::Convergence => (grid(&[1000], &[10], &[200.0], &[0.0], &[0.0]), 10, RankMode::True),
            PlanKind::PhaseDiagram => (
                grid(&[500], &[4], &[10.0, 20.0, 30.0, 40.0, 50.0, 60.0], &[0.0], &[0.0]),
                10,
                RankMode::True,
            ),
            PlanKind::HardEasyTable => (grid(&[1000], &[10], &[50.0, 120.0], &[0.0], &[0.0]), 5, RankMode::True),
            PlanKind::NoiseTable => (grid(&[1000], &[10], &[120.0], &[1e-2, 1e-1, 1.0], &[0.0]), 5, RankMode::True),
            PlanKind::NoiseModelSweep => (
                grid(&[500], &[4], &[40.0, 80.0, 160.0], &[0.5], &[0.0]),
                10,
                RankMode::True,
            ),
            PlanKind::ConditionSweep => (grid(&[1000], &[10], &[120.0], &[0.0], &[1.0, 5.0, 10.0]), 5, RankMode::Estimate),
            PlanKind::RatingsEval => (grid(&[0], &[0], &[0.0], &[0.0], &[0.0]), 1, RankMode::Estimate),
            PlanKind::IncoherenceReport => (grid(&[500], &[4], &[0.0], &[0.0], &[0.0]), 5, RankMode::True),
        };
        let solver = if kind == PlanKind::RatingsEval {
            SolverKind::Incremental
        } else {
            SolverKind::OptSpace
        };
        Self {
            kind,
            grid: g,
            trials,
            seed: 1,
            solver,
            rank,
            noise_family: NoiseFamily::Additive,
            noise_stop: true,
            config: OptConfig {
                tau: 1e-2,
                ..OptConfig::default()
            },
            output_path: PathBuf::from(format!("{kind}.csv")),
            data: None,
            format: None,
            holdout_k: 2,
            test_file: None,
            bounds: (None, None),
        }
    }

    /// Parses a plan file. `kind` must appear before any other key.
    pub fn parse(text: &str) -> CliResult<Self> {
        let pairs = parse_key_values(text)?;
        let (first, rest) = match pairs.split_first() {
            Some(((_, k, v), rest)) if k == "kind" => (v.parse::<PlanKind>()?, rest),
            _ => return Err(CliError::plan("plan must start with a `kind = ...` line")),
        };
        let mut plan = Self::defaults(first);
        for (line, key, value) in rest {
            plan.set(key, value).map_err(|e| CliError::plan(format!("line {line}: {e}")))?;
        }
        Ok(plan)
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::plan(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Assigns one plan key.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        match key.trim() {
            "kind" => {
                let kind: PlanKind = value.parse()?;
                if kind != self.kind {
                    return Err(CliError::plan(format!("plan kind is already {}", self.kind)));
                }
            }
            "n" => self.grid.n = parse_list(key, value)?,
            "r" => self.grid.r = parse_list(key, value)?,
            "epsilon" | "eps" => self.grid.epsilon = parse_list(key, value)?,
            "N" | "noise_ratio" => self.grid.noise_ratio = parse_list(key, value)?,
            "kappa" => self.grid.kappa = parse_list(key, value)?,
            "trials" => self.trials = parse_one(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "solver" => self.solver = value.parse()?,
            "rank" => self.rank = value.parse()?,
            "noise" => self.noise_family = value.parse().map_err(|e: optspace::Error| CliError::plan(e.to_string()))?,
            "noise_stop" => self.noise_stop = parse_one(key, value)?,
            "lambda" => self.config.lambda = parse_one(key, value)?,
            "tol" => self.config.delta_tol = parse_one(key, value)?,
            "kmax" => self.config.k_max = parse_one(key, value)?,
            "tau" => self.config.tau = parse_one(key, value)?,
            "rho_max" => self.config.rho_max = parse_one(key, value)?,
            "out" => self.output_path = PathBuf::from(value),
            "data" => self.data = Some(PathBuf::from(value)),
            "format" => self.format = Some(value.parse()?),
            "holdout_k" => self.holdout_k = parse_one(key, value)?,
            "test_file" => self.test_file = Some(PathBuf::from(value)),
            "min_rating" => self.bounds.0 = Some(parse_one(key, value)?),
            "max_rating" => self.bounds.1 = Some(parse_one(key, value)?),
            other => return Err(CliError::plan(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        let g = &self.grid;
        let empty = [
            ("n", g.n.is_empty()),
            ("r", g.r.is_empty()),
            ("epsilon", g.epsilon.is_empty()),
            ("N", g.noise_ratio.is_empty()),
            ("kappa", g.kappa.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|e| e.1) {
            return Err(CliError::plan(format!("grid `{name}` is empty")));
        }
        if self.trials == 0 {
            return Err(CliError::plan("trials must be at least 1"));
        }
        self.config.validate().map_err(|e| CliError::plan(e.to_string()))?;
        match self.kind {
            PlanKind::RatingsEval => {
                if self.data.is_none() {
                    return Err(CliError::plan("ratings_eval needs `data`"));
                }
                if self.test_file.is_none() && self.holdout_k == 0 {
                    return Err(CliError::plan("holdout_k must be at least 1"));
                }
            }
            _ => {
                for p in g.points() {
                    if self.kind.is_synthetic_solve() && !(p.epsilon > 0.0) {
                        return Err(CliError::plan(format!("epsilon must be positive, got {}", p.epsilon)));
                    }
                    if p.n == 0 || p.r == 0 || p.r > p.n {
                        return Err(CliError::plan(format!("need 1 <= r <= n, got n={} r={}", p.n, p.r)));
                    }
                    if !(p.noise_ratio >= 0.0) || !(p.kappa >= 0.0) || (p.kappa > 0.0 && p.kappa < 1.0) {
                        return Err(CliError::plan(format!(
                            "N must be >= 0 and kappa 0 or >= 1, got N={} kappa={}",
                            p.noise_ratio, p.kappa
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn ratings_source(&self) -> CliResult<Option<RatingsSource>> {
        let Some(path) = &self.data else { return Ok(None) };
        let format = match self.format {
            Some(f) => f,
            None => RatingsFormat::from_path(path),
        };
        let holdout = match &self.test_file {
            Some(t) => HoldoutRule::FixedSplit(t.clone()),
            None => HoldoutRule::PerUserK {
                k: self.holdout_k,
                seed: self.seed,
            },
        };
        let bounds = match self.bounds {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            (None, None) => None,
            _ => return Err(CliError::plan("set both min_rating and max_rating or neither")),
        };
        Ok(Some(RatingsSource {
            path: path.clone(),
            format,
            holdout,
            bounds,
        }))
    }

    /// The plan as `key = value` lines, re-parseable by [`ExperimentPlan::parse`].
    pub fn to_key_values(&self) -> String {
        let list = |v: Vec<String>| v.join(",");
        let g = &self.grid;
        let mut s = String::new();
        let mut push = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        push("kind", self.kind.to_string());
        push("n", list(g.n.iter().map(|x| x.to_string()).collect()));
        push("r", list(g.r.iter().map(|x| x.to_string()).collect()));
        push("epsilon", list(g.epsilon.iter().map(|x| x.to_string()).collect()));
        push("N", list(g.noise_ratio.iter().map(|x| x.to_string()).collect()));
        push("kappa", list(g.kappa.iter().map(|x| x.to_string()).collect()));
        push("trials", self.trials.to_string());
        push("seed", self.seed.to_string());
        push("solver", self.solver.name().to_string());
        push("rank", self.rank.to_string());
        push("noise", family_name(self.noise_family).to_string());
        push("noise_stop", self.noise_stop.to_string());
        push("lambda", self.config.lambda.to_string());
        push("tol", self.config.delta_tol.to_string());
        push("kmax", self.config.k_max.to_string());
        push("tau", self.config.tau.to_string());
        push("rho_max", self.config.rho_max.to_string());
        push("out", self.output_path.display().to_string());
        if let Some(d) = &self.data {
            push("data", d.display().to_string());
        }
        if let Some(f) = self.format {
            push("format", f.name().to_string());
        }
        push("holdout_k", self.holdout_k.to_string());
        if let Some(t) = &self.test_file {
            push("test_file", t.display().to_string());
        }
        if let Some(lo) = self.bounds.0 {
            push("min_rating", lo.to_string());
        }
        if let Some(hi) = self.bounds.1 {
            push("max_rating", hi.to_string());
        }
        s
    }
}

/// `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> CliResult<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::plan(format!("line {}: expected key = value", i + 1)))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::plan(format!("bad value {value:?} for `{key}`")))
}

/// Comma separated values; an empty string gives an empty list.
fn parse_list<T: FromStr>(key: &str, value: &str) -> CliResult<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_one(key, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for kind in PlanKind::ALL {
            let plan = ExperimentPlan::defaults(kind);
            if kind == PlanKind::RatingsEval {
                assert!(plan.validate().is_err());
            } else {
                plan.validate().unwrap();
            }
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in PlanKind::ALL {
            assert_eq!(kind.name().parse::<PlanKind>().unwrap(), kind);
        }
        assert_eq!("phase-diagram".parse::<PlanKind>().unwrap(), PlanKind::PhaseDiagram);
    }

    #[test]
    fn parse_overrides_defaults() {
        let plan = ExperimentPlan::parse(
            "# phase transition\nkind = phase_diagram\nepsilon = 10, 20\ntrials = 3\nrank = 4\ntau = 0.5\n",
        )
        .unwrap();
        assert_eq!(plan.grid.epsilon, vec![10.0, 20.0]);
        assert_eq!(plan.grid.n, vec![500]);
        assert_eq!(plan.trials, 3);
        assert_eq!(plan.rank, RankMode::Fixed(4));
        assert_eq!(plan.config.tau, 0.5);
    }

    #[test]
    fn key_values_round_trip() {
        let mut plan = ExperimentPlan::defaults(PlanKind::NoiseTable);
        plan.set("noise", "quantization").unwrap();
        plan.set("kappa", "0,3").unwrap();
        let back = ExperimentPlan::parse(&plan.to_key_values()).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let plan = ExperimentPlan::parse("kind = phase_diagram\nepsilon =\n").unwrap();
        assert!(matches!(plan.validate(), Err(CliError::Plan(_))));
        let plan = ExperimentPlan::parse("kind = phase_diagram\ntrials = 0\n").unwrap();
        assert!(plan.validate().is_err());
    }

    #[test]
    fn malformed_plans() {
        assert!(ExperimentPlan::parse("epsilon = 3\n").is_err());
        assert!(ExperimentPlan::parse("kind = nope\n").is_err());
        assert!(ExperimentPlan::parse("kind = convergence\nwhat = 1\n").is_err());
        assert!(ExperimentPlan::parse("kind = convergence\nn = ten\n").is_err());
        assert!(ExperimentPlan::parse("kind = convergence\nkind = phase_diagram\n").is_err());
        assert!(ExperimentPlan::parse("kind = convergence\nrank = 0\n").is_err());
    }

    #[test]
    fn grid_is_cartesian_in_declared_order() {
        let mut plan = ExperimentPlan::defaults(PlanKind::PhaseDiagram);
        plan.set("n", "10,20").unwrap();
        plan.set("epsilon", "3,4,5").unwrap();
        let pts = plan.grid.points();
        assert_eq!(pts.len(), 6);
        assert_eq!((pts[0].n, pts[0].epsilon), (10, 3.0));
        assert_eq!((pts[1].n, pts[1].epsilon), (10, 4.0));
        assert_eq!((pts[3].n, pts[3].epsilon), (20, 3.0));
    }
}
