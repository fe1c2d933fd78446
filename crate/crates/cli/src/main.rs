//! `dcom`: decompose activation matrices, benchmark Lanczos convergence,
//! estimate decomposition plans and sweep their parameters.

mod commands;
mod error;
mod samples;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "dcom", version, about = "Activation low-rank decomposition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Truncated SVD of one matrix, optionally with outlier channels split off.
    Decompose(DecomposeArgs),
    /// Lanczos error against the optimal truncation for several ranks.
    BenchConvergence(BenchArgs),
    /// Re-estimate a plan for each value of one parameter.
    Sweep(SweepArgs),
    /// Cost and latency report of a decomposition plan.
    Estimate(EstimateArgs),
    /// Per-layer outlier thresholds from sample activations.
    Calibrate(CalibrateArgs),
    /// Accelerator latency of Lanczos for several expansion factors.
    Simulate(SimulateArgs),
    /// Write a seeded synthetic matrix.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct LanczosArgs {
    /// Start-vector seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra bidiagonalization steps before truncating to the requested rank.
    #[arg(long, default_value_t = dcom_core::lanczos::DEFAULT_OVERSAMPLE)]
    oversample: usize,
    /// Breakdown tolerance; defaults to 1e-8 · ‖A‖_F / sqrt(rows · cols).
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    /// Matrix file (.dcm1 binary or .csv).
    matrix: PathBuf,
    #[arg(long)]
    rank: usize,
    /// Split outlier channels onto an exact side path before decomposing.
    #[arg(long)]
    outliers: bool,
    /// Threshold table; without it the matrix calibrates itself.
    #[arg(long, requires = "outliers")]
    thresholds: Option<PathBuf>,
    /// Table entry to use.
    #[arg(long, default_value_t = 0)]
    layer: usize,
    /// Channel share to extract when self-calibrating.
    #[arg(long, default_value_t = 0.03)]
    target_fraction: f64,
    #[arg(long, default_value_t = dcom_core::outlier::DEFAULT_COUNT_FRACTION)]
    count_fraction: f64,
    #[command(flatten)]
    lanczos: LanczosArgs,
    /// Directory for the factor matrices.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Matrix file; a synthetic matrix is generated when omitted.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    rows: usize,
    #[arg(long, default_value_t = 58)]
    cols: usize,
    /// flat, geometric or rank:N
    #[arg(long, default_value = "geometric")]
    spectrum: String,
    #[arg(long, value_delimiter = ',', default_value = "1,10,20")]
    ranks: Vec<usize>,
    #[command(flatten)]
    lanczos: LanczosArgs,
    /// Directory for convergence.csv and per-rank traces.
    #[arg(long, default_value = "convergence")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Model plan JSON; Llama-2-7b-like defaults when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Accelerator configuration JSON; calibrated defaults when omitted.
    #[arg(long)]
    hw: Option<PathBuf>,
    /// Baseline roofline JSON; A100-class defaults when omitted.
    #[arg(long)]
    baseline: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// rank, f, layers or outlier
    #[arg(long)]
    vary: String,
    /// One value per row; layer sets are comma-separated ids.
    #[arg(long, num_args = 1.., required = true)]
    values: Vec<String>,
    /// Decomposition plan JSON the sweep starts from; every layer at rank 1
    /// when omitted.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    plan: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Directory with one sub-directory of matrix files per layer id, or
    /// matrix files directly for a single layer 0.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    target_fraction: f64,
    #[arg(long, default_value_t = dcom_core::outlier::DEFAULT_COUNT_FRACTION)]
    count_fraction: f64,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 4096)]
    seq: usize,
    #[arg(long, default_value_t = 4096)]
    hidden: usize,
    #[arg(long, default_value_t = 10)]
    rank: usize,
    #[arg(long = "f", value_delimiter = ',', default_value = "1,2,4,8,16,32")]
    factors: Vec<usize>,
    #[arg(long)]
    hw: Option<PathBuf>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SynthKind {
    /// Prescribed singular values.
    Spectrum,
    /// Normal background with `±magnitude` channels.
    Planted,
    /// Low-rank activations with a few amplified channels.
    Activations,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Spectrum kind: flat, geometric or rank:N.
    #[arg(long, default_value = "geometric")]
    spectrum: String,
    /// Planted channel ids, or the channel count for activations.
    #[arg(long, value_delimiter = ',')]
    channels: Vec<usize>,
    /// Planted magnitude, or the largest channel gain for activations.
    #[arg(long, default_value_t = 100.0)]
    magnitude: f64,
    /// Channel scale.
    #[arg(long, default_value_t = 1.0)]
    scale: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// .dcm1 or .csv
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return CliError::Usage(e.to_string()).report(),
    };
    let result = match cli.command {
        Command::Decompose(a) => commands::decompose(a),
        Command::BenchConvergence(a) => commands::bench(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // a closed pipe on stdout (`dcom ... | head`) is not an error
        Err(CliError::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
