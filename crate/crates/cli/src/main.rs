//! `viscostab`: batch experiment runner over the viscostab library.
//!
//! Every command reads one INI config, runs deterministically for a fixed
//! seed, and writes CSV artifacts atomically. Failures print a single
//! machine-readable line to stderr and exit with a kind-specific code.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::ConfigError;
use viscostab::models::ModelBuildError;

const AFTER_HELP: &str = "\
EXIT CODES:
  0  success
  2  command-line usage error
  3  malformed config
  4  model build rejected
  5  numerical failure during a run
  6  step budget exceeded ([run] step_budget, default 1000000 steps per run)
  7  file I/O failure

ERRORS:
  Failures print exactly one line to stderr: error[<kind>]: <detail>

CONFIG (INI, '#'/';' comment lines):
  [model]   kind = wave | beam
            n = <grid cells>        xi = <p/q>        alpha = <damping gain>
  [run]     scheme = midpoint_conservative | midpoint_damped |
                     viscous_conservative | viscous_damped
            dt = <step>  -or-  dt_list = <comma-separated steps>
            t_final = <horizon>
            z0_policy = smooth | highest-mode | random-seeded   (default smooth)
            seed = <integer>                                    (default 0)
            step_budget = <max steps per run>                   (default 1000000)
  [certify] hautus_grid = auto  -or-  <omega_min>, <omega_max>, <points>
            beta_list = <comma-separated abscissas>
            gramian_variants = continuous, discrete_viscous, filtered
            t_final = <observation horizon>     delta = <filter cutoff factor>
  [output]  directory = <dir>   (default out)
            emit_plots = true | false
";

#[derive(Parser)]
#[command(
    name = "viscostab",
    version,
    about = "Midpoint time integration with numerical viscosity: runs, decay fits, and observability certificates",
    after_help = AFTER_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory; writes trajectory.csv
    Simulate(RunArgs),
    /// Fit decay rates across dt_list; writes sweep.csv (+ decay.gnuplot with --emit-plots)
    Sweep(RunArgs),
    /// Run the enabled certification scans; writes hautus.csv / transfer.csv / gramian.csv
    Certify(RunArgs),
    /// Decompose the conservative generator; writes spectrum.csv
    Spectrum(RunArgs),
    /// Print model facts and validation results to stdout
    ModelInfo(RunArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Experiment config file
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory (overrides [output] directory)
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for seeded policies (overrides [run] seed)
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for sweeps and scans (default: all cores)
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    /// Also write plot scripts next to the data
    #[arg(long)]
    pub emit_plots: bool,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Model(ModelBuildError),
    Numerics(String),
    Budget { steps: usize, budget: usize },
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Model(_) => 4,
            CliError::Numerics(_) => 5,
            CliError::Budget { .. } => 6,
            CliError::Io { .. } => 7,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "error[config]: {e}"),
            CliError::Model(e) => write!(f, "error[model]: {e}"),
            CliError::Numerics(msg) => write!(f, "error[numerics]: {msg}"),
            CliError::Budget { steps, budget } => {
                write!(f, "error[budget]: run needs {steps} steps, budget is {budget}")
            }
            CliError::Io { path, source } => {
                write!(f, "error[io]: {}: {source}", path.display())
            }
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => commands::run_simulate(args),
        Command::Sweep(args) => commands::run_sweep(args),
        Command::Certify(args) => commands::run_certify(args),
        Command::Spectrum(args) => commands::run_spectrum(args),
        Command::ModelInfo(args) => commands::run_model_info(args),
    };
    if let Err(err) = result {
        // One line, no matter what the underlying message contains.
        eprintln!("{}", err.to_string().replace('\n', " "));
        std::process::exit(err.exit_code());
    }
}
