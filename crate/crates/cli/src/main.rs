mod commands;
mod output;
mod spec;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flowcurv_core::FlowError;

#[derive(Parser, Debug)]
#[command(name = "flowcurv", version, about = "Slow invariant manifolds by flow curvature")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the built-in model names
    ListModels,
    /// Integrate a trajectory and write it as CSV
    Integrate(IntegrateArgs),
    /// Sample phi, its Lie derivative and the cofactor residual
    PhiScan(ScanArgs),
    /// Extract points of the phi = 0 manifold
    Manifold(ScanArgs),
    /// Tangent linear hyperplanes through the fixed points
    Hyperplane(HyperplaneArgs),
    /// Generalized curvatures along a trajectory
    Curvature(IntegrateArgs),
    /// Run the residual suites and print a pass/fail table
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Registry name or path to a JSON model config
    #[arg(long, short)]
    pub model: String,
    /// Override a parameter, e.g. `--param alpha=9` (repeatable)
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Output file (standard output when absent)
    #[arg(long, short)]
    pub output: Option<std::path::PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct TrajectoryArgs {
    /// Initial state, comma separated (model default when absent)
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Final time (model default when absent)
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub atol: f64,
}

#[derive(Args, Debug)]
pub struct IntegrateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub traj: TrajectoryArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Grid axes, e.g. `x1=-4:4:200,x2=-1:1:200`; without it a trajectory is scanned
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Fixed coordinates, e.g. `x3=fp,x4=0` (`fp`: nearest fixed point; unlisted ones are 0)
    #[arg(long, allow_hyphen_values = true)]
    pub slice: Option<String>,
    #[command(flatten)]
    pub traj: TrajectoryArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug)]
pub struct HyperplaneArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Fail when the fast eigenvalue is complex instead of using the dominant real one
    #[arg(long)]
    pub strict: bool,
    /// Significant digits in the printed equations
    #[arg(long, default_value_t = 6)]
    pub digits: usize,
    /// Write canonical coefficients (`c1..cn,offset`) to this file
    #[arg(long, short)]
    pub output: Option<std::path::PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Random points per Darboux check
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    /// Print the report as JSON
    #[arg(long)]
    pub json: bool,
}

/// Exit status 1: the request is invalid. Exit status 2: the numerics failed.
enum Failure {
    Config(anyhow::Error),
    Numerical(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<FlowError>() {
            Some(f) if !f.is_config() => Failure::Numerical(e),
            _ => Failure::Config(e),
        }
    }
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("FLOWCURV_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("FLOWCURV_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_threads().map_err(Failure::Config)?;
    match cli.command {
        Command::ListModels => commands::list_models(),
        Command::Integrate(a) => commands::integrate(&a),
        Command::PhiScan(a) => commands::phi_scan(&a),
        Command::Manifold(a) => commands::manifold(&a),
        Command::Hyperplane(a) => commands::hyperplane(&a),
        Command::Curvature(a) => commands::curvature(&a),
        Command::Verify(a) => commands::verify(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(2)
        }
    }
}
