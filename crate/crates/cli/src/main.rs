//! `sta-kit`: dissimilarity matrices, shift experiments, synthetic blobs,
//! Delannoy reports and single-pair Sinkhorn solves.
//!
//! Exit status: 0 ok, 2 usage or I/O, 3 domain error, 4 convergence failure.

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "sta-kit", version, about = "Spatio-temporal alignment toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pairwise STA (or soft-DTW) matrix over a manifest of series.
    Matrix(MatrixArgs),
    /// Soft-DTW gap under temporal shifts of a pulse, next to its bounds.
    Shift(ShiftArgs),
    /// Four-group synthetic blob dataset with a manifest.
    Blobs(BlobArgs),
    /// Delannoy sweep with the slacks of the shift-bound inequalities.
    Delannoy(DelannoyArgs),
    /// Unbalanced Sinkhorn between two vectors.
    Sinkhorn(SinkhornArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FrameCost {
    /// Unbalanced Sinkhorn divergence over the manifest geometry.
    Sinkhorn,
    /// Squared Euclidean distance (plain soft-DTW).
    Euclidean,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Entropic regularization; defaults to 10/p.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Marginal relaxation.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
}

#[derive(Debug, Args)]
struct MatrixArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    beta: f64,
    #[arg(long, value_enum, default_value_t = FrameCost::Sinkhorn)]
    cost: FrameCost,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Matrix CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run metadata JSON.
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ShiftArgs {
    #[arg(long, default_value_t = 400)]
    t_len: usize,
    /// Pulse values, written into a zero series.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,2,1")]
    levels: Vec<f64>,
    /// 0-based start of the pulse; centered when omitted.
    #[arg(long)]
    start: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10,100")]
    betas: Vec<f64>,
    /// Largest shift; the feasible maximum when omitted.
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BlobArgs {
    #[arg(long, default_value_t = 16)]
    h: usize,
    #[arg(long, default_value_t = 16)]
    w: usize,
    #[arg(long, default_value_t = 20)]
    t_len: usize,
    /// First region as `R0:R1xC0:C1`, half-open 0-based rows and columns.
    #[arg(long, default_value = "0:7x0:7")]
    region1: String,
    #[arg(long, default_value = "9:16x9:16")]
    region2: String,
    /// 1-based activation frames.
    #[arg(long, value_delimiter = ',', default_value = "5,15")]
    times: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    amp_min: f64,
    #[arg(long, default_value_t = 3.0)]
    amp_max: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_time: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_space: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct DelannoyArgs {
    #[arg(long, default_value_t = 30)]
    m_max: usize,
    #[arg(long, default_value_t = 30)]
    k_max: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SinkhornArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Grid geometry `HxW`.
    #[arg(long, conflicts_with = "graph", required_unless_present = "graph")]
    grid: Option<String>,
    /// Exponent of the grid cost.
    #[arg(long, default_value_t = 2.0)]
    l: f64,
    /// Edge list `u,v,weight` for a graph geometry.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Skip dividing the ground metric by its median.
    #[arg(long)]
    no_normalize: bool,
    #[command(flatten)]
    solver: SolverArgs,
    /// Also write the plan `P_ij = a_i K_ij b_j` as CSV.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Matrix(a) => commands::matrix(a),
        Command::Shift(a) => commands::shift(a),
        Command::Blobs(a) => commands::blobs(a),
        Command::Delannoy(a) => commands::delannoy(a),
        Command::Sinkhorn(a) => commands::sinkhorn(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sta-kit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
