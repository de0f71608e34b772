//! `thruster-fdd`: simulate, train, evaluate and benchmark from the shell.
//!
//! Exit codes: 0 success, 1 runtime or data failure, 2 usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "thruster-fdd", version, about = "Thruster soft-fault diagnosis on a simulated plant")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one recording and write it as CSV.
    Simulate(SimulateArgs),
    /// Train a regressor preset, or rank a grid of them.
    Train(TrainArgs),
    /// Score a regressor on a recording.
    Eval(EvalArgs),
    /// Residuals of a recording against a nominal model.
    Residuals(ResidualsArgs),
    /// Train and test a health-condition classifier.
    Classify(ClassifyArgs),
    /// Run the full protocol and write the report directory.
    Benchmark(BenchmarkArgs),
}

/// Plant and fault settings, in the benchmark config format.
#[derive(Debug, Args)]
struct PlantArgs {
    /// Config file; only `plant.*` and `fault.*` keys matter here.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (`key=value`, repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SignalKind {
    Sine,
    Staircase,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    signal: SignalKind,
    /// Sine frequency in Hz.
    #[arg(long, required_if_eq("signal", "sine"))]
    freq: Option<f64>,
    /// Sine amplitude.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Staircase increment.
    #[arg(long, default_value_t = 0.25)]
    step: f64,
    /// Staircase hold time per level, s.
    #[arg(long, default_value_t = 10.0)]
    hold: f64,
    /// Length of the recording, s.
    #[arg(long)]
    duration: f64,
    #[arg(long, value_parser = parse_condition)]
    condition: thruster_fdd::FaultCondition,
    #[arg(long)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    plant: PlantArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(thruster_fdd::models::REGRESSOR_PRESETS),
          required_unless_present = "grid", conflicts_with = "grid")]
    preset: Option<String>,
    /// JSON grid of specs to rank instead of a single preset.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Training recording (CSV).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 2)]
    folds: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Model JSON, or the ranking CSV with `--grid`.
    #[arg(short, long)]
    output: PathBuf,
    /// Training-history CSV; defaults to `<output stem>.history.csv`.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalMode {
    Parallel,
    SeriesParallel,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalMode::Parallel)]
    mode: EvalMode,
    /// Score only the first N predicted rows.
    #[arg(long)]
    rows: Option<usize>,
}

#[derive(Debug, Args)]
struct ResidualsArgs {
    /// Nominal regressor.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FeatureArg {
    All,
    Residuals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassifierArg {
    Mlp,
    Lstm,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long, value_enum)]
    features: FeatureArg,
    #[arg(long, value_enum, default_value_t = ClassifierArg::Mlp)]
    kind: ClassifierArg,
    /// Nominal regressor. Required for residual features; with raw
    /// features it drops the same warm-up rows so both modes see
    /// identical samples.
    #[arg(long)]
    nominal: Option<PathBuf>,
    /// Labeled single-condition training recording (repeatable).
    #[arg(long = "train", required = true)]
    train: Vec<PathBuf>,
    /// Labeled single-condition test recording (repeatable).
    #[arg(long = "test", required = true)]
    test: Vec<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    /// Confusion-matrix CSV (row-normalized).
    #[arg(short, long)]
    output: PathBuf,
    /// Also save the trained classifier.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Config file; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Report directory.
    #[arg(long, default_value = "report")]
    out: PathBuf,
    /// Override one config key (`key=value`, repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn parse_condition(s: &str) -> Result<thruster_fdd::FaultCondition, String> {
    s.parse().map_err(|e: thruster_fdd::FddError| e.to_string())
}

/// Failure classes that map onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn thread_pool() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("THRUSTER_FDD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("THRUSTER_FDD_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = thread_pool().and_then(|()| match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Residuals(a) => commands::residuals(a),
        Command::Classify(a) => commands::classify(a),
        Command::Benchmark(a) => commands::benchmark(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
