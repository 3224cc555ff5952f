//! Executes an [`ExperimentPlan`] and writes its CSV artifacts.
//!
//! Trials run one after another and rows are collected before anything is
//! written, so the CSV body only depends on the plan. Timestamps and wall
//! times go to the `.meta` sidecar.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use optspace::manifold::{incremental_optspace_with_truth, optspace_with_truth, retract, IterationRecord, OptSpaceResult, StopReason};
use optspace::metrics::{fit_error, incoherence_diagnostic, incoherence_of_pair, noise_ratio, oracle_rmse, rel_error, rmse, ExperimentResult, IncoherenceDiagnostic};
use optspace::rng::trial_seed;
use optspace::sparse::{truncated_svd, MatrixLike, SvdOptions};
use optspace::synth::{apply_noise, calibrate_noise_ratio, generate_matrix, sample_pattern, InstanceSpec, NoiseSpec};
use optspace::{ObservedMatrix, OptConfig};

use crate::error::{CliError, CliResult};
use crate::plan::{family_name, ExperimentPlan, GridPoint, PlanKind, RankMode, SolverKind};
use crate::ratings::{load_matrix, load_ratings, random_baseline_nmae, ratings_eval};

/// First line of every CSV the harness writes.
pub const FORMAT_LINE: &str = "# optspace-results v1";

/// Grid columns leading every synthetic trial row.
pub const GRID_COLUMNS: [&str; 7] = ["n", "r", "epsilon", "noise_ratio", "kappa", "noise", "solver"];

/// Columns after [`ExperimentResult::CSV_COLUMNS`] in trial rows.
pub const EXTRA_COLUMNS: [&str; 4] = ["measured_noise_ratio", "oracle_rmse", "stop", "error"];

pub const SUMMARY_COLUMNS: [&str; 15] = [
    "n",
    "r",
    "epsilon",
    "noise_ratio",
    "kappa",
    "noise",
    "solver",
    "trials",
    "failed",
    "reconstructed",
    "rate",
    "mean_rel_error",
    "median_rel_error",
    "mean_rmse",
    "mean_iterations",
];

#[derive(Debug, Clone)]
pub struct TrialMetrics {
    pub result: ExperimentResult,
    pub measured_noise_ratio: f64,
    pub oracle_rmse: Option<f64>,
    pub stop: StopReason,
    pub trace: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct TrialFailure {
    pub tag: &'static str,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct TrialRow {
    pub point: GridPoint,
    pub solver: SolverKind,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub outcome: Result<TrialMetrics, TrialFailure>,
}

/// What a finished plan produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub rows: usize,
    pub failures: usize,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    /// 0 when every trial succeeded, 2 when some failed.
    pub fn exit_code(&self) -> i32 {
        if self.failures > 0 {
            2
        } else {
            0
        }
    }
}

pub fn error_tag(e: &optspace::Error) -> &'static str {
    use optspace::Error as E;
    match e {
        E::NoConvergence { .. } => "svd_no_convergence",
        E::OptimizationFailed { .. } => "optimization_failed",
        E::Degenerate(_) => "degenerate",
        E::Precondition(_) => "precondition",
        E::InvalidConfig(_) => "invalid_config",
        E::InvalidShape { .. } | E::DimensionMismatch { .. } | E::IndexOutOfRange { .. } => "shape",
        _ => "error",
    }
}

pub fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::FitTolerance => "fit_tolerance",
        StopReason::NoiseLevel => "noise_level",
        StopReason::RelativeDecrease => "relative_decrease",
        StopReason::MaxIterations => "max_iterations",
        StopReason::Stalled => "stalled",
        StopReason::Stationary => "stationary",
    }
}

/// `out.csv` -> `out.<tag>.csv`.
pub fn sibling(out: &Path, tag: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{tag}.csv"))
}

pub fn meta_path(out: &Path) -> PathBuf {
    out.with_extension("meta")
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{FORMAT_LINE}")?;
    Ok(csv::Writer::from_writer(file))
}

fn sci(x: f64) -> String {
    format!("{x:e}")
}

fn grid_fields(p: &GridPoint, noise: &str, solver: SolverKind) -> Vec<String> {
    vec![
        p.n.to_string(),
        p.r.to_string(),
        p.epsilon.to_string(),
        p.noise_ratio.to_string(),
        p.kappa.to_string(),
        noise.to_string(),
        solver.name().to_string(),
    ]
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Per-trial configuration: the plan's solver settings plus seed and, when
/// requested, the true noise variance.
fn trial_config(plan: &ExperimentPlan, seed: u64, noise: &NoiseSpec) -> OptConfig {
    let mut cfg = plan.config.clone();
    cfg.seed = seed;
    if plan.noise_stop && !matches!(noise, NoiseSpec::None) {
        cfg.noise_variance = noise.variance();
    }
    cfg
}

fn rank_for(plan: &ExperimentPlan, p: &GridPoint) -> Option<usize> {
    match plan.rank {
        RankMode::Estimate => None,
        RankMode::True => Some(p.r),
        RankMode::Fixed(r) => Some(r),
    }
}

/// Generates, solves and scores one synthetic instance.
pub fn run_trial(plan: &ExperimentPlan, p: &GridPoint, solver: SolverKind, seed: u64) -> optspace::Result<TrialMetrics> {
    let mut spec = InstanceSpec::square(p.n, p.r, p.epsilon, seed)?;
    if p.kappa > 0.0 {
        spec = spec.with_kappa(p.kappa);
    }
    let instance = generate_matrix(&spec)?;
    let truth = &instance.matrix;
    let pattern = sample_pattern(spec.shape, p.epsilon, seed)?;
    let noise = if p.noise_ratio > 0.0 {
        calibrate_noise_ratio(truth, &pattern, plan.noise_family, p.noise_ratio)?
    } else {
        NoiseSpec::None
    };
    let observed = apply_noise(truth, &pattern, &noise, seed)?;
    let cfg = trial_config(plan, seed, &noise);
    let reference = (plan.kind == PlanKind::Convergence).then_some(truth);

    let start = Instant::now();
    let result = solve(&observed, &cfg, solver, rank_for(plan, p), reference)?;
    let wall = start.elapsed().as_secs_f64();

    let estimate = result.triple.to_dense();
    let clean = truth.values_on(&pattern);
    let z: Vec<f64> = observed.values().iter().zip(&clean).map(|(o, c)| o - c).collect();
    let measured = if p.noise_ratio > 0.0 { noise_ratio(&clean, &z)? } else { 0.0 };
    let oracle = if p.noise_ratio > 0.0 {
        // the additive sigma with the same observed noise energy
        let energy = clean.iter().map(|v| v * v).sum::<f64>();
        let sigma = p.noise_ratio * (energy / pattern.nnz() as f64).sqrt();
        Some(oracle_rmse(p.n, p.r, pattern.nnz(), sigma)?)
    } else {
        None
    };
    Ok(TrialMetrics {
        result: ExperimentResult::new(
            rel_error(truth, &estimate)?,
            rmse(truth, &estimate)?,
            fit_error(&observed, &result.triple)?,
            result.iterations(),
            wall,
            result.rank(),
            seed,
        ),
        measured_noise_ratio: measured,
        oracle_rmse: oracle,
        stop: result.stop,
        trace: result.trace,
    })
}

fn solve(
    observed: &ObservedMatrix,
    cfg: &OptConfig,
    solver: SolverKind,
    rank: Option<usize>,
    truth: Option<&DMatrix<f64>>,
) -> optspace::Result<OptSpaceResult> {
    match solver {
        SolverKind::OptSpace => optspace_with_truth(observed, cfg, rank, truth),
        SolverKind::Incremental => {
            let mut cfg = cfg.clone();
            if let Some(r) = rank {
                cfg.rho_max = r;
            }
            incremental_optspace_with_truth(observed, &cfg, truth)
        }
    }
}

/// Runs every trial of a synthetic plan in grid-then-seed order.
pub fn run_trials(plan: &ExperimentPlan) -> Vec<TrialRow> {
    let solvers: Vec<SolverKind> = if plan.kind == PlanKind::ConditionSweep {
        vec![SolverKind::OptSpace, SolverKind::Incremental]
    } else {
        vec![plan.solver]
    };
    let mut rows = Vec::new();
    for p in plan.grid.points() {
        for &solver in &solvers {
            for t in 0..plan.trials {
                let seed = trial_seed(plan.seed, t as u64);
                let start = Instant::now();
                let outcome = run_trial(plan, &p, solver, seed).map_err(|e| TrialFailure {
                    tag: error_tag(&e),
                    message: e.to_string(),
                });
                rows.push(TrialRow {
                    point: p,
                    solver,
                    seed,
                    wall_time_seconds: start.elapsed().as_secs_f64(),
                    outcome,
                });
            }
        }
    }
    rows
}

/// Validates and runs a plan, writing the results CSV, its summaries and the
/// metadata sidecar next to `plan.output_path`.
pub fn run_plan(plan: &ExperimentPlan) -> CliResult<RunReport> {
    plan.validate()?;
    let started = unix_now();
    let clock = Instant::now();
    let out = &plan.output_path;
    let mut meta: Vec<(String, String)> = Vec::new();
    let mut files = vec![out.clone()];

    let (rows, failures) = match plan.kind {
        PlanKind::RatingsEval => run_ratings(plan, &mut meta)?,
        PlanKind::IncoherenceReport => run_incoherence(plan, &mut files)?,
        _ => {
            let rows = run_trials(plan);
            write_trials(out, plan, &rows)?;
            let summary = sibling(out, "summary");
            write_summary(&summary, plan, &rows)?;
            files.push(summary);
            if plan.kind == PlanKind::Convergence {
                let trace = sibling(out, "trace");
                write_traces(&trace, plan, &rows)?;
                files.push(trace);
                let mean = sibling(out, "trace_mean");
                write_mean_trace(&mean, plan, &rows)?;
                files.push(mean);
            }
            for (i, row) in rows.iter().enumerate() {
                meta.push((format!("trial.{i}.wall_time_seconds"), row.wall_time_seconds.to_string()));
                if let Err(f) = &row.outcome {
                    meta.push((format!("trial.{i}.error"), f.message.replace('\n', " ")));
                }
            }
            let failures = rows.iter().filter(|r| r.outcome.is_err()).count();
            (rows.len(), failures)
        }
    };

    let meta_file = meta_path(out);
    let mut w = BufWriter::new(File::create(&meta_file)?);
    writeln!(w, "format = {}", FORMAT_LINE.trim_start_matches("# "))?;
    writeln!(w, "started_unix = {started:.3}")?;
    writeln!(w, "finished_unix = {:.3}", unix_now())?;
    writeln!(w, "wall_time_seconds = {:.6}", clock.elapsed().as_secs_f64())?;
    writeln!(w, "rows = {rows}")?;
    writeln!(w, "failures = {failures}")?;
    for line in plan.to_key_values().lines() {
        writeln!(w, "plan.{line}")?;
    }
    for (k, v) in &meta {
        writeln!(w, "{k} = {v}")?;
    }
    w.flush()?;
    files.push(meta_file);
    Ok(RunReport { rows, failures, files })
}

fn noise_label(plan: &ExperimentPlan, p: &GridPoint) -> &'static str {
    if p.noise_ratio > 0.0 {
        family_name(plan.noise_family)
    } else {
        "none"
    }
}

fn write_trials(path: &Path, plan: &ExperimentPlan, rows: &[TrialRow]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    let header: Vec<&str> = GRID_COLUMNS
        .iter()
        .chain(ExperimentResult::CSV_COLUMNS.iter())
        .chain(EXTRA_COLUMNS.iter())
        .copied()
        .collect();
    w.write_record(&header)?;
    for row in rows {
        let mut fields = grid_fields(&row.point, noise_label(plan, &row.point), row.solver);
        match &row.outcome {
            Ok(m) => {
                fields.extend(m.result.csv_fields());
                fields.push(sci(m.measured_noise_ratio));
                fields.push(m.oracle_rmse.map(sci).unwrap_or_default());
                fields.push(stop_name(m.stop).to_string());
                fields.push(String::new());
            }
            Err(f) => {
                fields.push(row.seed.to_string());
                fields.extend(std::iter::repeat_n(String::new(), ExperimentResult::CSV_COLUMNS.len() - 2));
                fields.push("0".to_string());
                fields.extend([String::new(), String::new(), String::new(), f.tag.to_string()]);
            }
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Aggregate of one grid point and solver.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub point: GridPoint,
    pub solver: SolverKind,
    pub trials: usize,
    pub failed: usize,
    pub reconstructed: usize,
    pub rel_errors: Vec<f64>,
    pub rmses: Vec<f64>,
    pub iterations: Vec<usize>,
}

impl GroupSummary {
    /// Reconstructed trials over all trials; failed trials count as misses.
    pub fn rate(&self) -> f64 {
        self.reconstructed as f64 / self.trials as f64
    }

    pub fn median_rel_error(&self) -> Option<f64> {
        median(&self.rel_errors)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (c > 0).then(|| s / c as f64)
}

/// Groups consecutive rows sharing a grid point and solver.
pub fn summarize(rows: &[TrialRow]) -> Vec<GroupSummary> {
    let mut out: Vec<GroupSummary> = Vec::new();
    for row in rows {
        let fresh = match out.last() {
            Some(g) => g.point != row.point || g.solver != row.solver,
            None => true,
        };
        if fresh {
            out.push(GroupSummary {
                point: row.point,
                solver: row.solver,
                trials: 0,
                failed: 0,
                reconstructed: 0,
                rel_errors: Vec::new(),
                rmses: Vec::new(),
                iterations: Vec::new(),
            });
        }
        let g = out.last_mut().expect("group exists");
        g.trials += 1;
        match &row.outcome {
            Ok(m) => {
                g.reconstructed += usize::from(m.result.reconstructed);
                g.rel_errors.push(m.result.rel_error);
                g.rmses.push(m.result.rmse);
                g.iterations.push(m.result.iterations);
            }
            Err(_) => g.failed += 1,
        }
    }
    out
}

fn write_summary(path: &Path, plan: &ExperimentPlan, rows: &[TrialRow]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    let opt = |x: Option<f64>| x.map(sci).unwrap_or_default();
    for g in summarize(rows) {
        let mut fields = grid_fields(&g.point, noise_label(plan, &g.point), g.solver);
        fields.extend([
            g.trials.to_string(),
            g.failed.to_string(),
            g.reconstructed.to_string(),
            g.rate().to_string(),
            opt(mean(g.rel_errors.iter().copied())),
            opt(g.median_rel_error()),
            opt(mean(g.rmses.iter().copied())),
            opt(mean(g.iterations.iter().map(|&i| i as f64))),
        ]);
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

fn write_traces(path: &Path, plan: &ExperimentPlan, rows: &[TrialRow]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<&str> = GRID_COLUMNS.to_vec();
    header.extend(["seed", "iteration", "rank", "fit_error", "prediction_error"]);
    w.write_record(&header)?;
    for row in rows {
        let Ok(m) = &row.outcome else { continue };
        for rec in &m.trace {
            let mut fields = grid_fields(&row.point, noise_label(plan, &row.point), row.solver);
            fields.extend([
                row.seed.to_string(),
                rec.iteration.to_string(),
                rec.rank.to_string(),
                sci(rec.fit_error),
                rec.prediction_error.map(sci).unwrap_or_default(),
            ]);
            w.write_record(&fields)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-iteration means over the instances that reached that iteration.
fn write_mean_trace(path: &Path, plan: &ExperimentPlan, rows: &[TrialRow]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<&str> = GRID_COLUMNS.to_vec();
    header.extend(["iteration", "instances", "mean_fit_error", "mean_prediction_error"]);
    w.write_record(&header)?;
    let mut start = 0;
    while start < rows.len() {
        let head = &rows[start];
        let end = start + rows[start..].iter().take_while(|r| r.point == head.point && r.solver == head.solver).count();
        let traces: Vec<&[IterationRecord]> = rows[start..end]
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|m| m.trace.as_slice()))
            .collect();
        let longest = traces.iter().map(|t| t.len()).max().unwrap_or(0);
        for k in 0..longest {
            let at: Vec<&IterationRecord> = traces.iter().filter_map(|t| t.get(k)).collect();
            let mut fields = grid_fields(&head.point, noise_label(plan, &head.point), head.solver);
            fields.extend([
                at[0].iteration.to_string(),
                at.len().to_string(),
                mean(at.iter().map(|r| r.fit_error)).map(sci).unwrap_or_default(),
                mean(at.iter().filter_map(|r| r.prediction_error)).map(sci).unwrap_or_default(),
            ]);
            w.write_record(&fields)?;
        }
        start = end;
    }
    w.flush()?;
    Ok(())
}

pub const RATINGS_COLUMNS: [&str; 11] = [
    "solver",
    "rank",
    "r_hat",
    "iterations",
    "train",
    "test",
    "flagged_users",
    "min_rating",
    "max_rating",
    "nmae",
    "random_nmae",
];

fn run_ratings(plan: &ExperimentPlan, meta: &mut Vec<(String, String)>) -> CliResult<(usize, usize)> {
    let source = plan.ratings_source()?.ok_or_else(|| CliError::plan("ratings_eval needs `data`"))?;
    let dataset = load_ratings(&source.path, source.format, &source.holdout, source.bounds)?;
    let rank = match plan.rank {
        RankMode::Fixed(r) => Some(r),
        _ => None,
    };
    let mut cfg = plan.config.clone();
    cfg.seed = plan.seed;
    let baseline = random_baseline_nmae(&dataset, plan.seed)?;
    let report = ratings_eval(&dataset, plan.solver, &cfg, rank);

    let mut w = csv_writer(&plan.output_path)?;
    let mut header = RATINGS_COLUMNS.to_vec();
    header.push("error");
    w.write_record(&header)?;
    let mut fields = vec![
        plan.solver.name().to_string(),
        plan.rank.to_string(),
    ];
    let failed = match &report {
        Ok(r) => {
            fields.extend([
                r.r_hat.to_string(),
                r.iterations.to_string(),
                r.train_count.to_string(),
                r.test_count.to_string(),
                r.flagged_users.to_string(),
                dataset.min.to_string(),
                dataset.max.to_string(),
                sci(r.nmae),
                sci(baseline),
                String::new(),
            ]);
            meta.push(("solve_wall_time_seconds".into(), r.wall_time_seconds.to_string()));
            false
        }
        Err(e) => {
            let tag = match e {
                CliError::Core(inner) => error_tag(inner),
                _ => "error",
            };
            fields.extend(std::iter::repeat_n(String::new(), 2));
            fields.extend([
                dataset.train.len().to_string(),
                dataset.test.len().to_string(),
                dataset.flagged_users.len().to_string(),
                dataset.min.to_string(),
                dataset.max.to_string(),
                String::new(),
                sci(baseline),
                tag.to_string(),
            ]);
            meta.push(("error".into(), e.to_string().replace('\n', " ")));
            true
        }
    };
    w.write_record(&fields)?;
    w.flush()?;
    Ok((1, usize::from(failed)))
}

pub const INCOHERENCE_COLUMNS: [&str; 9] =
    ["source", "n", "r", "seed", "mu_a1", "a2_max", "a2_sampled", "left_total", "right_total"];

fn run_incoherence(plan: &ExperimentPlan, files: &mut Vec<PathBuf>) -> CliResult<(usize, usize)> {
    let mut results: Vec<(String, usize, usize, u64, IncoherenceDiagnostic)> = Vec::new();
    for p in plan.grid.points() {
        for t in 0..plan.trials {
            let seed = trial_seed(plan.seed, t as u64);
            let inst = generate_matrix(&InstanceSpec::square(p.n, p.r, 1.0, seed)?)?;
            let pair = retract(&inst.left, &inst.right)?;
            results.push(("synthetic".into(), p.n, p.r, seed, incoherence_of_pair(&pair, seed)?));
        }
    }
    if let Some(path) = &plan.data {
        let format = plan.format.unwrap_or_else(|| crate::ratings::RatingsFormat::from_path(path));
        let matrix = load_matrix(path, format)?;
        for &r in &plan.grid.r {
            let svd = truncated_svd(&matrix, r, &SvdOptions::with_seed(plan.seed))?;
            let d = incoherence_diagnostic(&svd.left, &svd.right, plan.seed)?;
            results.push(("data".into(), matrix.nrows(), r, plan.seed, d));
        }
    }

    let mut w = csv_writer(&plan.output_path)?;
    w.write_record(INCOHERENCE_COLUMNS)?;
    for (src, n, r, seed, d) in &results {
        w.write_record([
            src.clone(),
            n.to_string(),
            r.to_string(),
            seed.to_string(),
            sci(d.mu_a1()),
            sci(d.a2_max),
            u8::from(d.a2_sampled).to_string(),
            sci(*d.cumulative_left.last().unwrap_or(&0.0)),
            sci(*d.cumulative_right.last().unwrap_or(&0.0)),
        ])?;
    }
    w.flush()?;

    let curves = sibling(&plan.output_path, "curves");
    let mut w = csv_writer(&curves)?;
    w.write_record(["source", "n", "r", "seed", "side", "index", "cumulative"])?;
    for (src, n, r, seed, d) in &results {
        for (side, curve) in [("left", &d.cumulative_left), ("right", &d.cumulative_right)] {
            for (i, c) in curve.iter().enumerate() {
                w.write_record([
                    src.clone(),
                    n.to_string(),
                    r.to_string(),
                    seed.to_string(),
                    side.to_string(),
                    (i + 1).to_string(),
                    sci(*c),
                ])?;
            }
        }
    }
    w.flush()?;
    files.push(curves);
    Ok((results.len(), 0))
}
