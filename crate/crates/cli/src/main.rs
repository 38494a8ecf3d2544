// Negated float comparisons like `!(x > 0.0)` are deliberate: they also
// reject NaN, which the suggested `partial_cmp` rewrite would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const NUMERIC: u8 = 3;

#[derive(Debug)]
pub struct AppError {
    pub code: u8,
    pub message: String,
}

impl AppError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.message.fmt(f)
    }
}

/// Maps a library error to an exit class: structural input problems are data
/// errors, everything else is a numerical failure.
pub fn lib_err(e: cascademix::Error) -> AppError {
    use cascademix::Error::*;
    let code = match e {
        EmptyCascade | UnorderedTimes(_) | InvalidTime { .. } | EmptyInput(_) | ZeroSize
        | LengthMismatch(..) => DATA,
        _ => NUMERIC,
    };
    AppError::new(code, e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    /// Exponential decay kernel.
    Exp,
    /// Power-law kernel with cutoff.
    Pl,
}

impl From<KernelArg> for cascademix::KernelFamily {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Exp => cascademix::KernelFamily::Exponential,
            KernelArg::Pl => cascademix::KernelFamily::PowerLaw,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "cascademix",
    version,
    about = "Fit, characterize, and forecast groups of reshare cascades",
    after_help = "Environment:\n  CASCADEMIX_EM_TOL          EM convergence tolerance (default 1e-8)\n  CASCADEMIX_KMM_INNER_EVALS kernel-mixture inner solver budget (default 200)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate cascades from a single Hawkes regime and write them as JSONL.
    Simulate(SimulateArgs),
    /// Fit per-item dual mixture models and publisher pools.
    Fit(FitArgs),
    /// Compute diffusion embeddings for every fitted item.
    Embed(EmbedArgs),
    /// Distances between item embeddings for requested pairs.
    Dist(DistArgs),
    /// Predict final item popularity for a publisher's observed cascades.
    Predict(PredictArgs),
    /// Expected holdout log-likelihood of partially observed cascades.
    EvalHoldout(EvalHoldoutArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Branching factor in [0, 1).
    #[arg(long, value_name = "N")]
    pub n_star: f64,
    #[arg(long, value_enum)]
    pub kernel: KernelArg,
    /// Kernel decay parameter.
    #[arg(long)]
    pub theta: f64,
    /// Power-law cutoff (required for --kernel pl).
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub num_cascades: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Spread cascades round-robin over this many items.
    #[arg(long, default_value_t = 1)]
    pub items: usize,
    #[arg(long, default_value = "item-0")]
    pub item_id: String,
    #[arg(long, default_value = "pub-0")]
    pub publisher_id: String,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Cascade JSONL file.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Grouping key for fitting (one model per group).
    #[arg(long, default_value = "item", value_parser = ["item"])]
    pub group_by: String,
    #[arg(long, value_enum)]
    pub kernel: KernelArg,
    /// Fixed component count.
    #[arg(long, conflicts_with = "select_k")]
    pub k: Option<usize>,
    /// AIC selection range, e.g. 1..5 (default when --k is absent).
    #[arg(long, value_name = "LO..HI")]
    pub select_k: Option<String>,
    /// Kernel-mixture component count; defaults to the per-item selected k.
    #[arg(long)]
    pub kmm_k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// EM restarts per fit.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Worker threads for per-item fits (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Most recent items pooled per publisher.
    #[arg(long, default_value_t = 5)]
    pub pool_max_items: usize,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, default_value_t = cascademix::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DistArgs {
    /// Embeddings CSV produced by `embed`.
    #[arg(long, value_name = "FILE")]
    pub embeddings: PathBuf,
    /// File of `item_a,item_b` lines.
    #[arg(long, value_name = "FILE")]
    pub pairs: PathBuf,
    /// Output CSV (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long)]
    pub publisher: String,
    /// Observed cascades (JSONL), grouped by item.
    #[arg(long, value_name = "FILE")]
    pub observed: PathBuf,
    /// Observation time T in seconds.
    #[arg(long, value_name = "T")]
    pub at_time: f64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalHoldoutArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Full cascades (JSONL); everything past --at-time is the holdout.
    #[arg(long, value_name = "FILE")]
    pub cascades: PathBuf,
    #[arg(long, value_name = "T")]
    pub at_time: f64,
    /// Output CSV (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Fit(args) => commands::fit(&args),
        Command::Embed(args) => commands::embed(&args),
        Command::Dist(args) => commands::dist(&args),
        Command::Predict(args) => commands::predict(&args),
        Command::EvalHoldout(args) => commands::eval_holdout(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
