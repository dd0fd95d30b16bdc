// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod output;

use config::ConfigFile;
use error::CliError;

/// Dipolar magic-echo spin dynamics and the memory-kernel thermodynamic model.
///
/// All times on the command line and in output files are microseconds.
/// Parameters can also come from a `key=value` file given with --config;
/// flags win over the file, the file wins over defaults.
#[derive(Parser, Debug)]
#[command(name = "magecho", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Describe the cluster cut from the CaF2 fluorine lattice.
    LatticeInfo(LatticeInfoArgs),
    /// Sweep a built-in sequence over t1, or run a pulse-program file once.
    Run(RunArgs),
    /// Solve the memory-kernel equation for the inverse temperature.
    Thermo(ThermoArgs),
    /// Run the seeded invariant suite.
    Verify(VerifyArgs),
    /// Write the nonzero entries of an operator matrix.
    DumpOperator(DumpArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct ClusterArgs {
    /// Field direction: 100, 110, 111 or x,y,z [default: 100]
    #[arg(long)]
    pub orientation: Option<String>,
    /// Cluster cut-off radius in lattice spacings [default: 3]
    #[arg(long)]
    pub radius: Option<f64>,
    /// Number of spins kept, nearest first [default: 6]
    #[arg(long)]
    pub max_sites: Option<usize>,
}

#[derive(Args, Debug)]
pub struct LatticeInfoArgs {
    #[command(flatten)]
    pub cluster: ClusterArgs,
    /// Also write the pair couplings as CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value parameter file
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Same as --sequence
    #[arg(value_name = "SEQUENCE", conflicts_with = "sequence")]
    pub sequence_pos: Option<String>,
    /// builtin:seq1, builtin:seq2, builtin:rpw or a .pp file
    #[arg(long)]
    pub sequence: Option<String>,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    /// Burst amplitude omega1/gamma in gauss [default: 25.3]
    #[arg(long)]
    pub omega1_gauss: Option<f64>,
    /// start:stop:step in half-cycles, e.g. 2:40:2hc [default: 0:40:2]
    #[arg(long)]
    pub t1_grid: Option<String>,
    /// Replace each burst by exact -Hd/2 evolution
    #[arg(long)]
    pub ideal: bool,
    /// Output CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value parameter file
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ThermoArgs {
    /// Field direction with tabulated sample data: 100, 110 or 111 [default: 100]
    #[arg(long)]
    pub orientation: Option<String>,
    /// Kernel strength n [default: 0.45]
    #[arg(long)]
    pub n: Option<f64>,
    /// Gaussian decay constant as a fraction of M2 [default: 0.25]
    #[arg(long)]
    pub m_ratio: Option<f64>,
    /// Onset delay before beta starts to fall [default: 80]
    #[arg(long)]
    pub offset_us: Option<f64>,
    /// End of the trajectory
    #[arg(long)]
    pub t_end_us: Option<f64>,
    /// Output sampling step and initial solver step [default: 1]
    #[arg(long)]
    pub step_us: Option<f64>,
    /// Compute the kernel from a cluster, `orientation[:radius[:max_sites]]`, e.g. 100:3:6
    #[arg(long)]
    pub kernel_from_cluster: Option<String>,
    /// Output CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value parameter file
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// RNG seed for the random clusters [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of random clusters [default: 20]
    #[arg(long)]
    pub trials: Option<usize>,
    /// key=value parameter file
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DumpArgs {
    /// hd, h2, hm2, p, q, ix, iy, iz, h1, h2-1 or tilted
    #[arg(long)]
    pub operator: Option<String>,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    /// omega1/gamma in gauss, for h1, h2-1 and tilted [default: 25.3]
    #[arg(long)]
    pub omega1_gauss: Option<f64>,
    /// Output CSV; printed to stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value parameter file
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn load(config: &Option<PathBuf>) -> Result<ConfigFile, CliError> {
    match config {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::LatticeInfo(a) => commands::lattice_info(&a, &load(&a.config)?),
        Command::Run(a) => commands::run(&a, &load(&a.config)?),
        Command::Thermo(a) => commands::thermo(&a, &load(&a.config)?),
        Command::Verify(a) => commands::verify(&a, &load(&a.config)?),
        Command::DumpOperator(a) => commands::dump_operator(&a, &load(&a.config)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
