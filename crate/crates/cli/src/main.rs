//! `sagemix` command-line driver.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sagemix::mixup::{DEFAULT_SIGMA, DEFAULT_THETA};

use commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "sagemix", version, about = "Saliency-guided mixup for point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Sagemix,
    Pointmixup,
    Rsmix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorruptionKind {
    Jitter,
    Rotate,
    Scale,
    Dropout,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mix two clouds and write the result as XYZ
    MixPair(MixPairArgs),
    /// Mix randomly paired manifest entries into a new dataset
    Augment(AugmentArgs),
    /// Write a synthetic shape dataset with a manifest
    GenDataset(GenDatasetArgs),
    /// Train the toy classifier and write per-epoch metrics
    TrainToy(TrainToyArgs),
    /// Time the assignment solvers on random clouds
    BenchAssignment(BenchArgs),
    /// Apply one corruption to a cloud
    Corrupt(CorruptArgs),
}

#[derive(clap::Args, Debug)]
pub struct MixPairArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Saliency sidecar for `a` (default: distance from centroid)
    #[arg(long)]
    pub saliency_a: Option<PathBuf>,
    #[arg(long)]
    pub saliency_b: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Method::Sagemix)]
    pub method: Method,
    #[arg(long)]
    pub out: PathBuf,
    /// Structured TOML report; per-point λ goes to `<out>.lambda`
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Resample both clouds to this many points first
    #[arg(long)]
    pub resample: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub label_a: usize,
    #[arg(long, default_value_t = 1)]
    pub label_b: usize,
}

#[derive(clap::Args, Debug)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Method::Sagemix)]
    pub method: Method,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(clap::Args, Debug)]
pub struct GenDatasetArgs {
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long)]
    pub per_class: usize,
    #[arg(long, default_value_t = 256)]
    pub points: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct TrainToyArgs {
    #[arg(long)]
    pub manifest_train: PathBuf,
    #[arg(long)]
    pub manifest_test: PathBuf,
    #[arg(long, default_value = "none")]
    pub aug: String,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub metrics_out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = sagemix::toymodel::DEFAULT_HIDDEN)]
    pub hidden: usize,
}

#[derive(clap::Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "8,64,256,1024")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub csv_out: PathBuf,
    /// Write 0 in the timing column so output is reproducible byte for byte
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(clap::Args, Debug)]
pub struct CorruptArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub kind: CorruptionKind,
    /// σ for jitter, degrees for rotate, factor for scale, fraction for dropout
    #[arg(long)]
    pub param: f64,
    #[arg(long, default_value = "z")]
    pub axis: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    eprintln!("sagemix defaults: theta={DEFAULT_THETA} sigma={DEFAULT_SIGMA}");
    let result = match cli.command {
        Command::MixPair(args) => commands::mix_pair(&args),
        Command::Augment(args) => commands::augment(&args),
        Command::GenDataset(args) => commands::gen_dataset(&args),
        Command::TrainToy(args) => commands::train_toy(&args),
        Command::BenchAssignment(args) => commands::bench_assignment(&args),
        Command::Corrupt(args) => commands::corrupt(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                CliError::Usage(_) => 2,
                CliError::Core(ref e) if e.is_numeric() => 4,
                _ => 3,
            })
        }
    }
}
