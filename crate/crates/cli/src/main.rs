//! `shadow-mpo`: batch front-end for state synthesis, sampling, learning,
//! estimation and principal component analysis.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

const THREADS_VAR: &str = "SHADOW_MPO_THREADS";

#[derive(Debug, Parser)]
#[command(name = "shadow-mpo", version, about = "MPO tomography from randomized measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a state from a JSON spec file.
    SimulateState(SimulateArgs),
    /// Draw a randomized-measurement dataset from a state file.
    Sample(SampleArgs),
    /// Learn an MPO from a dataset (or from exact window data).
    Learn(LearnArgs),
    /// Shadow estimates from a dataset.
    Estimate(EstimateArgs),
    /// Dominant eigenvector of an MPO by DMRG.
    Qpca(QpcaArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// State spec, e.g. {"state": "gibbs", "beta": 2, "g": 1.01, "h": 0.04, "n": 16}.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Defaults to `<output>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub state: PathBuf,
    /// Number of random bases N_u.
    #[arg(long)]
    pub bases: usize,
    /// Shots per basis N_M.
    #[arg(long)]
    pub shots: usize,
    /// Bases in the learning split; the rest are for testing. All by default.
    #[arg(long)]
    pub split: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    OneSite,
    TwoSite,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["data", "exact"]))]
pub struct LearnArgs {
    /// Measurement dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Learn from the exact window marginals of this state instead of data.
    #[arg(long)]
    pub exact: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub ell: usize,
    #[arg(long, default_value_t = 4)]
    pub chi: usize,
    #[arg(long, default_value_t = 20)]
    pub sweeps: usize,
    #[arg(long, value_enum, default_value_t = Mode::TwoSite)]
    pub mode: Mode,
    #[arg(long, default_value_t = 1e-10)]
    pub regularization: f64,
    /// AFC block size of the fidelity monitor; `ell + 1` by default.
    #[arg(long)]
    pub monitor_k: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Pure reference state (MPS) for a fitted depolarizing prior.
    #[arg(long, requires = "data")]
    pub crm_prior: Option<PathBuf>,
    /// Learned MPO.
    #[arg(long)]
    pub output: PathBuf,
    /// Report JSON with the sweep trace.
    #[arg(long)]
    pub report: PathBuf,
    /// Sweep trace as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum What {
    Fidelity,
    Purity,
    Entropy,
    Observable,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Split {
    All,
    Learning,
    Testing,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub what: What,
    /// Model state (MPO or MPS) to compare against.
    #[arg(long, conflicts_with = "target")]
    pub sigma: Option<PathBuf>,
    /// Pure target state (MPS) to compare against.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// AFC block size.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Pauli strings such as "Z0 Z1" or "XIZ"; nearest-neighbour ZZ by default.
    #[arg(long)]
    pub pauli: Vec<String>,
    #[arg(long, value_enum, default_value_t = Split::All)]
    pub split: Split,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QpcaArgs {
    #[arg(long)]
    pub sigma: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub chi_mps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub sweeps: usize,
    /// Principal component MPS.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Ideal pure state for comparison in the report.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Per-site observables as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_VAR}={value:?} is not a thread count"))?;
    if n == 0 {
        bail!("{THREADS_VAR} must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::SimulateState(a) => commands::simulate_state(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Learn(a) => commands::learn(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Qpca(a) => commands::qpca(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
