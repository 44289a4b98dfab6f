//! `sam` — batch CLI for cross-modal subspace training with scheduled
//! adaptive margins.
//!
//! Subcommands: `synth` (synthetic dataset generation), `train`, `eval`,
//! `sweep` (λ × f_a grid), `margins` (re-export a run's margin trace).
//! Exit codes: 0 success, 1 usage error, 2 data/config error, 3 divergence.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "sam",
    version,
    about = "Cross-modal subspace learning with scheduled adaptive margin constraints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired-feature dataset
    Synth(SynthArgs),
    /// Train the two projection towers on a dataset directory
    Train(TrainArgs),
    /// Evaluate a checkpoint with bidirectional mAP
    Eval(EvalArgs),
    /// Train over the lambda × f_a grid and tabulate test mAP
    Sweep(SweepArgs),
    /// Re-export margins.csv from a finished run
    Margins(MarginsArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of categories
    #[arg(long, default_value_t = 10)]
    categories: usize,
    /// Instances per category
    #[arg(long, default_value_t = 200)]
    per_category: usize,
    /// Visual feature dimensionality
    #[arg(long, default_value_t = 32)]
    dv: usize,
    /// Textual feature dimensionality
    #[arg(long, default_value_t = 32)]
    dt: usize,
    /// Standard deviation of intra-category feature noise
    #[arg(long, default_value_t = 0.1)]
    intra_spread: f64,
    /// Scale of the category means (controls category separation)
    #[arg(long, default_value_t = 1.0)]
    inter_sep: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
}

/// Training knobs shared by `train` and `sweep`. Flags override values from
/// `--config`; unset flags fall back to the file and then to the defaults.
#[derive(Args, Clone)]
struct TrainOpts {
    /// JSON config file with any subset of the training fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Total epochs n_e
    #[arg(long)]
    epochs: Option<usize>,
    /// Semantic-vs-cluster trade-off lambda in [0, 1]
    #[arg(long)]
    lambda: Option<f64>,
    /// Activation factor f_a in [0, 1]
    #[arg(long)]
    fa: Option<f64>,
    /// Scheduler steepness k
    #[arg(long)]
    k: Option<f64>,
    /// Static margin m
    #[arg(long)]
    margin: Option<f64>,
    /// Learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Per-step learning-rate decay
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Negatives per anchor and direction
    #[arg(long)]
    n_neg: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Shared-subspace dimensionality D
    #[arg(long)]
    dim: Option<usize>,
    /// Dropout probability on the first hidden layer
    #[arg(long)]
    dropout: Option<f64>,
    /// Cap on sampled pairs for the distance statistics
    #[arg(long)]
    max_pairs: Option<usize>,
    /// Validation metric used to pick the best epoch
    #[arg(long, value_enum)]
    selection: Option<SelectionArg>,
    #[arg(long, value_enum)]
    ablation: Option<AblationArg>,
    /// Record wall-clock time in history.csv (breaks bitwise reproducibility)
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Run output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["run", "checkpoint"])))]
struct EvalArgs {
    /// Dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Run directory containing checkpoint-best/
    #[arg(long)]
    run: Option<PathBuf>,
    /// Explicit checkpoint directory (model.json + weights.f32)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Cut the ranking off at K (mAP@K instead of full-list mAP)
    #[arg(long)]
    at_k: Option<usize>,
    /// Where to write eval.csv (defaults to <run>/eval.csv when --run is given)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Sweep output directory (sweep.csv is written here)
    #[arg(long)]
    out: PathBuf,
    /// Lambda grid
    #[arg(long, value_delimiter = ',', default_values_t = commands::DEFAULT_LAMBDAS)]
    lambdas: Vec<f64>,
    /// Activation-factor grid
    #[arg(long, value_delimiter = ',', default_values_t = commands::DEFAULT_FAS)]
    fas: Vec<f64>,
    /// Seeds per cell (cell metric is the mean over repeats)
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Parallel cells (each cell still trains single-threaded)
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Args)]
struct MarginsArgs {
    /// Run directory containing margins.csv
    #[arg(long)]
    run: PathBuf,
    /// Write to this file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SelectionArg {
    /// Mean validation mAP over both directions
    Map,
    /// Validation hinge loss under the static margin
    StaticLoss,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AblationArg {
    None,
    /// Pin the margin to the static value m
    Static,
    /// Pin alpha to 1 and lambda to 1 (pure semantic margin)
    Alpha1Lambda1,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

/// Anything that should stop the process, tagged with its exit code.
enum CliError {
    Core(sam_core::Error),
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(sam_core::Error::DivergenceDetected { .. }) => 3,
            _ => 2,
        }
    }
}

impl From<sam_core::Error> for CliError {
    fn from(e: sam_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Data(m) => write!(f, "{m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Train(args) => commands::train(args).map(|_| ()),
        Command::Eval(args) => commands::eval(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Margins(args) => commands::margins(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
