//! `ctsr`: data generation, library construction, discovery, tolerance
//! sweeps, equivariance checks and benchmarks from one config file.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ctsr_core::library::LibraryMode;
use ctsr_core::solver::TolSchedule;
use ctsr_core::CtsrError;

#[derive(Parser)]
#[command(name = "ctsr", version, about = "Cartesian tensor sparse regression")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its provenance record.
    GenData(Common),
    /// Enumerate the candidate library.
    BuildLibrary(Common),
    /// Fit one sparse equation (per component in scalar mode).
    Discover(Common),
    /// Sweep the threshold tolerance and report the Pareto front and knee.
    Pareto(ParetoArgs),
    /// Check tensor candidates for rotation and reflection equivariance.
    EquivCheck(EquivArgs),
    /// Multi-seed errors and stage timings in both library modes.
    Bench(BenchArgs),
    /// Fast built-in checks; exits with 3 on failure.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Tensor,
    Scalar,
}

impl From<ModeArg> for LibraryMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Tensor => LibraryMode::Tensor,
            ModeArg::Scalar => LibraryMode::Scalar,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ScheduleArg {
    Geometric,
    Additive,
}

impl From<ScheduleArg> for TolSchedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Geometric => TolSchedule::Geometric,
            ScheduleArg::Additive => TolSchedule::Additive,
        }
    }
}

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// burgers2d, convection2d, ns3d, giesekus3d or custom.
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Seed for sampling, the train/test split and generated data.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset file to use instead of generating one.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output directory; falls back to the config, then CTSR_OUTPUT_DIR.
    #[arg(long, short)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub d_tol: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    /// Spatial samples per snapshot.
    #[arg(long)]
    pub n_space: Option<usize>,
    /// Sampled snapshots (0 uses the first snapshot only).
    #[arg(long)]
    pub n_time: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ParetoArgs {
    #[command(flatten)]
    pub common: Common,
    /// Grid points between the sweep bounds.
    #[arg(long)]
    pub points: Option<usize>,
    /// Also sweep without column normalisation.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Args, Debug)]
pub struct EquivArgs {
    #[command(flatten)]
    pub common: Common,
    /// Random rotations and, separately, random reflections.
    #[arg(long, default_value_t = 20)]
    pub transforms: usize,
    /// Evaluation points per transform.
    #[arg(long, default_value_t = 20)]
    pub positions: usize,
    /// Pass threshold for analytic fields.
    #[arg(long, default_value_t = 1e-8)]
    pub threshold: f64,
    /// Pass threshold for lattice symmetries on grid fields.
    #[arg(long, default_value_t = 1e-13)]
    pub lattice_threshold: f64,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    #[arg(long, short)]
    pub output_dir: Option<PathBuf>,
}

/// Failure with a process exit code.
#[derive(Debug)]
pub struct Exit(pub u8, pub String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Exit>() {
            return e.0;
        }
        if let Some(e) = cause.downcast_ref::<CtsrError>() {
            return if e.is_numerical() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::GenData(c) => commands::gen_data(&c),
        Command::BuildLibrary(c) => commands::build_library(&c),
        Command::Discover(c) => commands::discover(&c),
        Command::Pareto(a) => commands::pareto(&a),
        Command::EquivCheck(a) => commands::equiv_check(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Selftest(a) => commands::selftest(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
