use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use optspace::sparse::write_matrix_market;
use optspace::synth::{apply_noise, calibrate_noise_ratio, generate_matrix, sample_pattern, InstanceSpec, NoiseFamily, NoiseSpec};
use optspace_cli::{run_plan, CliError, CliResult, ExperimentPlan, PlanKind};

#[derive(Parser)]
#[command(name = "optspace", version, about = "Matrix completion experiments and ratings evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-iteration fit and prediction error traces
    Convergence(PlanArgs),
    /// Reconstruction rate over a grid of sample sizes
    PhaseDiagram(PlanArgs),
    /// Exact completion in the hard and easy regimes
    HardEasyTable(PlanArgs),
    /// Relative error against the noise ratio
    NoiseTable(PlanArgs),
    /// RMSE under one noise family against the oracle bound
    NoiseModelSweep(PlanArgs),
    /// OptSpace and Incremental OptSpace on ill-conditioned matrices
    ConditionSweep(PlanArgs),
    /// NMAE on a ratings file
    RatingsEval(PlanArgs),
    /// Row-norm profiles and cross incoherence of factors
    IncoherenceReport(PlanArgs),
    /// Run a plan file; flags override its keys
    Run {
        #[arg(value_name = "PLAN")]
        plan_file: PathBuf,
        #[command(flatten)]
        args: PlanArgs,
    },
    /// Write the observed entries of a synthetic instance as MatrixMarket
    Generate(GenerateArgs),
}

#[derive(Args, Default)]
struct PlanArgs {
    /// Start from this plan file instead of the built-in defaults
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// estimate, true, or a fixed rank
    #[arg(long)]
    rank: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    kmax: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    /// optspace or incremental
    #[arg(long)]
    solver: Option<String>,
    /// Comma separated grid values
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long = "noise-ratio")]
    noise_ratio: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    /// additive, multiplicative, outliers or quantization
    #[arg(long)]
    noise: Option<String>,
    #[arg(long = "noise-stop")]
    noise_stop: Option<String>,
    /// Ratings file
    #[arg(long)]
    data: Option<String>,
    /// triples or mtx
    #[arg(long)]
    format: Option<String>,
    #[arg(long = "holdout-k")]
    holdout_k: Option<String>,
    /// Fixed test set; disables per-user holdout
    #[arg(long = "test-file")]
    test_file: Option<String>,
    #[arg(long = "min-rating")]
    min_rating: Option<String>,
    #[arg(long = "max-rating")]
    max_rating: Option<String>,
    /// Any other plan key, as key=value
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl PlanArgs {
    fn apply(&self, plan: &mut ExperimentPlan) -> CliResult<()> {
        let pairs = [
            ("seed", &self.seed),
            ("trials", &self.trials),
            ("out", &self.out),
            ("rank", &self.rank),
            ("lambda", &self.lambda),
            ("tol", &self.tol),
            ("kmax", &self.kmax),
            ("tau", &self.tau),
            ("solver", &self.solver),
            ("n", &self.n),
            ("r", &self.r),
            ("epsilon", &self.epsilon),
            ("N", &self.noise_ratio),
            ("kappa", &self.kappa),
            ("noise", &self.noise),
            ("noise_stop", &self.noise_stop),
            ("data", &self.data),
            ("format", &self.format),
            ("holdout_k", &self.holdout_k),
            ("test_file", &self.test_file),
            ("min_rating", &self.min_rating),
            ("max_rating", &self.max_rating),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                plan.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Plan(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            plan.set(k, v)?;
        }
        Ok(())
    }

    fn build(&self, kind: Option<PlanKind>, file: Option<&PathBuf>) -> CliResult<ExperimentPlan> {
        let mut plan = match (file.or(self.plan.as_ref()), kind) {
            (Some(path), _) => ExperimentPlan::from_file(path)?,
            (None, Some(kind)) => ExperimentPlan::defaults(kind),
            (None, None) => return Err(CliError::Plan("no plan given".into())),
        };
        if let Some(kind) = kind {
            if plan.kind != kind {
                return Err(CliError::Plan(format!("plan file is a {} plan, not {kind}", plan.kind)));
            }
        }
        self.apply(&mut plan)?;
        Ok(plan)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    r: usize,
    #[arg(long, default_value_t = 40.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    kappa: Option<f64>,
    /// Target noise ratio; 0 for noiseless
    #[arg(long = "noise-ratio", default_value_t = 0.0)]
    noise_ratio: f64,
    #[arg(long, default_value = "additive")]
    noise: String,
    #[arg(long)]
    out: PathBuf,
}

fn generate(args: &GenerateArgs) -> CliResult<()> {
    let mut spec = InstanceSpec::square(args.n, args.r, args.epsilon, args.seed)?;
    if let Some(k) = args.kappa {
        spec = spec.with_kappa(k);
    }
    let inst = generate_matrix(&spec)?;
    let pattern = sample_pattern(spec.shape, args.epsilon, args.seed)?;
    let noise = if args.noise_ratio > 0.0 {
        let family: NoiseFamily = args.noise.parse()?;
        calibrate_noise_ratio(&inst.matrix, &pattern, family, args.noise_ratio)?
    } else {
        NoiseSpec::None
    };
    let observed = apply_noise(&inst.matrix, &pattern, &noise, args.seed)?;
    write_matrix_market(&observed, BufWriter::new(File::create(&args.out)?))?;
    eprintln!("wrote {} entries to {}", observed.nnz(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, kind, file) = match &cli.command {
        Command::Convergence(a) => (a, Some(PlanKind::Convergence), None),
        Command::PhaseDiagram(a) => (a, Some(PlanKind::PhaseDiagram), None),
        Command::HardEasyTable(a) => (a, Some(PlanKind::HardEasyTable), None),
        Command::NoiseTable(a) => (a, Some(PlanKind::NoiseTable), None),
        Command::NoiseModelSweep(a) => (a, Some(PlanKind::NoiseModelSweep), None),
        Command::ConditionSweep(a) => (a, Some(PlanKind::ConditionSweep), None),
        Command::RatingsEval(a) => (a, Some(PlanKind::RatingsEval), None),
        Command::IncoherenceReport(a) => (a, Some(PlanKind::IncoherenceReport), None),
        Command::Run { plan_file, args } => (args, None, Some(plan_file)),
        Command::Generate(g) => {
            return match generate(g) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    let report = args.build(kind, file).and_then(|plan| run_plan(&plan));
    match report {
        Ok(report) => {
            for f in &report.files {
                eprintln!("wrote {}", f.display());
            }
            if report.failures > 0 {
                eprintln!("{} of {} trials failed", report.failures, report.rows);
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
