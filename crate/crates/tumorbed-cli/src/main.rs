//! Tumor bed estimation workflow CLI.
//!
//! Commands: `synth` (synthetic cohorts), `infer` (tile scoring and bed
//! prediction), `mine` (negative-patch selection), `evaluate` (cohort
//! metrics), `extent` (ad-hoc d1/d2/d_prim of a polygon document).
//!
//! Exit codes: 0 success, 2 configuration errors, 3 input/data errors,
//! 4 classifier-protocol failures.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::PipelineFlags;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Input(String),
    Classifier(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Classifier(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Classifier(m) => write!(f, "classifier error: {m}"),
        }
    }
}

impl From<tumorbed::Error> for CliError {
    fn from(e: tumorbed::Error) -> Self {
        use tumorbed::Error as E;
        match &e {
            E::Classifier { .. } => CliError::Classifier(e.to_string()),
            E::InvalidParameter(_) | E::UncoveredPixels { .. } => CliError::Config(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "tumorbed", version, about = "Tumor bed estimation from tiled slide classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic slide cohort with planted ground truth.
    Synth(SynthArgs),
    /// Predict tumor beds over slide bundles.
    Infer(InferArgs),
    /// Mine negative patches from a feature file.
    Mine(MineArgs),
    /// Evaluate predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Compute d1/d2/d_prim for a polygon document.
    Extent(ExtentArgs),
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    /// Cohort spec file (TOML); flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Resolved or partial run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of slides.
    #[arg(long = "slides")]
    n_slides: Option<u32>,
    /// Slide width and height in pixels.
    #[arg(long)]
    dims: Option<u32>,
    /// Microns per pixel.
    #[arg(long)]
    mpp: Option<f64>,
    /// Fraction of tumor-free slides.
    #[arg(long = "tumor-free")]
    tumor_free: Option<f64>,
    /// Tissue pixel density.
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct InferArgs {
    /// Slide bundles: metadata documents or directories containing them.
    #[arg(long = "slides", num_args = 1..)]
    slides: Vec<PathBuf>,
    /// Classifier: `oracle`, `scores:PATH`, or `proto:ADDR`.
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Seed for the oracle classifier's noise.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the slide metadata's microns-per-pixel.
    #[arg(long)]
    mpp: Option<f64>,
    /// Per-request timeout for protocol classifiers, seconds.
    #[arg(long = "timeout-secs")]
    timeout_secs: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct MineArgs {
    /// Binary feature file.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Sampling strategy: kmeans, random, or none.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cluster count for kmeans.
    #[arg(long)]
    k: Option<usize>,
    /// Patches selected per cluster.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Total sample size for the random strategy.
    #[arg(long = "m-total")]
    m_total: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct EvaluateArgs {
    /// Directory of `*.pred.json` prediction records.
    #[arg(long = "pred")]
    predictions: Option<PathBuf>,
    /// Ground-truth directory containing `manifest.json`.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dice rasterization cell size in pixels.
    #[arg(long)]
    cell_size: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct ExtentArgs {
    /// Polygon document (JSON).
    #[arg(long)]
    polygon: Option<PathBuf>,
    /// Override the document's microns-per-pixel.
    #[arg(long)]
    mpp: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Optional output directory; the extent also prints to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Infer(args) => commands::infer::run(args),
        Command::Mine(args) => commands::mine::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Extent(args) => commands::extent::run(args),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
