use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "vibronic", version, about = "Vibronic coupling dynamics: exact, Ehrenfest and trapped-ion emulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configuration on one back end.
    Run(RunArgs),
    /// Run the toy model over a grid of λ/Δ and N, one output per point.
    Sweep(SweepArgs),
    /// Compare two population traces on the same time grid.
    Compare(CompareArgs),
    /// Compile the pulse schedule and write its listing.
    Compile(RunArgs),
    /// Estimate experimental wall-clock time over a λ/Δ × N grid.
    Estimate(RunArgs),
}

/// Flags mirror the sections of the run configuration; flags override the
/// file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration (a metadata sidecar works too).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// toy, ci, vaet or plet.
    #[arg(long)]
    pub preset: Option<String>,
    /// λ/Δ of the toy model; a comma list for `estimate`.
    #[arg(long = "lambda-over-delta", value_delimiter = ',')]
    pub lambda_over_delta: Vec<f64>,
    /// Mode count of the toy model; a comma list for `estimate`.
    #[arg(long, value_delimiter = ',')]
    pub modes: Vec<usize>,
    /// Circular polarization of the plet preset (left or right).
    #[arg(long)]
    pub polarization: Option<String>,
    /// exact, ehrenfest, ion-ideal, ion-noisy, compile or estimate.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub tau_fs: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub initial_state: Option<usize>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Fock cutoffs, one per mode (exact and ion back ends).
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Vec<usize>,
    #[arg(long)]
    pub eps_cut: Option<f64>,
    #[arg(long)]
    pub eps_int: Option<f64>,
    /// lab or interaction (exact back end).
    #[arg(long)]
    pub frame: Option<String>,
    /// Ehrenfest trajectory count.
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Seed for Ehrenfest sampling and shot noise.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trotter steps S.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Runs R per time point (shot noise for ion back ends, cost for estimate).
    #[arg(long)]
    pub runs: Option<usize>,
    /// Measured time points S' (estimate).
    #[arg(long)]
    pub time_points: Option<usize>,
    /// compact or one-hot.
    #[arg(long)]
    pub encoding: Option<String>,
    /// software or physical.
    #[arg(long)]
    pub frame_mode: Option<String>,
    /// canonical or reversed.
    #[arg(long)]
    pub order: Option<String>,
    /// every-pulse, every-step, grid-points or never.
    #[arg(long)]
    pub positivity: Option<String>,
    /// Hardware parameter file with a [hardware] table.
    #[arg(long)]
    pub hardware: Option<PathBuf>,
    #[arg(long)]
    pub no_motional_dephasing: bool,
    #[arg(long)]
    pub no_heating: bool,
    #[arg(long)]
    pub no_laser_dephasing: bool,
    /// Heating through `a†` only.
    #[arg(long)]
    pub upward_heating: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory for the per-point outputs.
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Print a flag line when the largest deviation exceeds this value.
    #[arg(long, default_value_t = 0.1)]
    pub flag_above: f64,
}
