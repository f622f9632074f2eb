use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use greedy_dict::experiment::{self, ExperimentConfig, ExperimentKind};
use greedy_dict::Error;

const WORKERS_ENV: &str = "GREEDY_DICT_WORKERS";

#[derive(Parser)]
#[command(
    name = "greedy-dict",
    version,
    about = "Orthogonal greedy learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// OGL with the four atom-choice metrics over the iteration count.
    OglCompare(RunArgs),
    /// Thresholded OGL over the (δ, k) grid.
    ToglCompare(RunArgs),
    /// δ-TOGL over the δ grid.
    DeltaTogl(RunArgs),
    /// Fit time and sparsity of δ-TOGL across the δ grid.
    CostProfile(RunArgs),
    /// Success counts over training sizes and target accuracies.
    PhaseDiagram(RunArgs),
    /// δ-TOGL against OGL, ridge and Lasso.
    MethodTable(RunArgs),
    /// Fit one greedy learner to an `x,y` CSV file.
    Fit(FitArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config, or the manifest.json of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (falls back to GREEDY_DICT_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Training data with header `x,y`.
    #[arg(long)]
    input: PathBuf,
}

enum Failure {
    Config(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) => Failure::Config(msg),
            Error::InvalidArgument(_)
            | Error::Domain(_)
            | Error::Parse { .. }
            | Error::Io { .. } => Failure::Data(msg),
            Error::RankDeficient(_)
            | Error::NotApplicable(_)
            | Error::FingerprintMismatch { .. } => Failure::Numerical(msg),
        }
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn init_workers(flag: Option<usize>) -> Result<(), Failure> {
    let workers = match flag {
        Some(n) => Some(n),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                Failure::Config(format!(
                    "{WORKERS_ENV} must be a positive integer, got {v:?}"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = workers {
        if n == 0 {
            return Err(Failure::Config("worker count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("cannot start {n} workers: {e}")))?;
    }
    Ok(())
}

fn run_experiment(kind: ExperimentKind, args: &RunArgs) -> Result<(), Failure> {
    init_workers(args.workers)?;
    let cfg = load_config(args)?;
    let report = experiment::run(kind, &cfg)?;
    report.write_to(&args.out)?;
    println!(
        "{}: wrote {} tables to {}",
        kind.name(),
        report.tables.len() + report.timing.len(),
        args.out.display()
    );
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|source| {
        Failure::from(Error::Io {
            path: path.display().to_string(),
            source,
        })
    })
}

fn run_fit(args: &FitArgs) -> Result<(), Failure> {
    init_workers(args.run.workers)?;
    let cfg = load_config(&args.run)?;
    cfg.validate(ExperimentKind::Fit)?;
    let outcome = experiment::fit_one(&cfg, &args.input)?;
    std::fs::create_dir_all(&args.run.out).map_err(|source| {
        Failure::from(Error::Io {
            path: args.run.out.display().to_string(),
            source,
        })
    })?;
    let mut json = outcome.estimator.to_json();
    json.push('\n');
    write_file(&args.run.out.join("estimator.json"), &json)?;
    let e = &outcome.estimator;
    println!("samples: {}", outcome.n_samples);
    println!("k_final: {}", e.k_final);
    println!("train_rmse: {:.16e}", outcome.train_rmse);
    println!("termination_reason: {:?}", e.termination_reason);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::OglCompare(a) => run_experiment(ExperimentKind::OglCompare, a),
        Command::ToglCompare(a) => run_experiment(ExperimentKind::ToglCompare, a),
        Command::DeltaTogl(a) => run_experiment(ExperimentKind::DeltaTogl, a),
        Command::CostProfile(a) => run_experiment(ExperimentKind::CostProfile, a),
        Command::PhaseDiagram(a) => run_experiment(ExperimentKind::PhaseDiagram, a),
        Command::MethodTable(a) => run_experiment(ExperimentKind::MethodTable, a),
        Command::Fit(a) => run_fit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
