//! Command-line front end for the stability toolkit.
//!
//! [`run`] is the whole program minus process plumbing: it parses
//! arguments, executes one subcommand, writes the machine-readable summary
//! to `out`, reports errors on standard error and returns the exit status.

mod commands;
pub mod config;
mod svg;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub const EXIT_IO: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
/// `dataset-check` verdict other than stable.
pub const EXIT_UNSTABLE: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Validation(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => EXIT_IO,
            CliError::Validation(_) => EXIT_VALIDATION,
        }
    }
}

impl From<stab_core::StabError> for CliError {
    fn from(e: stab_core::StabError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "stab", version, about = "Stability analysis for plants driven by a denoising controller")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the coupled system and classify the trajectory.
    Simulate {
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
        /// Trajectory CSV.
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Print the analytic stability verdict.
    Analyze {
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
    },
    /// Evaluate a two-parameter grid of scalar systems.
    Sweep {
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
        /// `name:min:max:steps`, e.g. `A:0.5:4:64`.
        #[arg(long)]
        axis1: String,
        #[arg(long)]
        axis2: String,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Also simulate every cell.
        #[arg(long)]
        empirical: bool,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Expert and denoising trajectories for several effective gains.
    PhasePlane {
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
        /// Comma-separated K' values; may be empty.
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        kprime: String,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Estimate gain and covariance from demonstrations and gate on stability.
    DatasetCheck {
        #[arg(short = 'd', long = "demos")]
        demos: PathBuf,
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
    },
}

fn dispatch(cli: Cli, seed: Option<String>, out: &mut dyn Write) -> Result<u8, CliError> {
    match cli.command {
        Command::Simulate { config, output } => commands::simulate(&config, output.as_deref(), seed, out),
        Command::Analyze { config } => commands::analyze(&config, seed, out),
        Command::Sweep { config, axis1, axis2, output, svg, empirical, jobs } => commands::sweep(
            &config,
            commands::SweepArgs { axis1, axis2, output, svg, empirical, jobs },
            seed,
            out,
        ),
        Command::PhasePlane { config, kprime, output, svg } => {
            commands::phase_plane(&config, &kprime, output.as_deref(), svg.as_deref(), seed, out)
        }
        Command::DatasetCheck { demos, config } => commands::dataset_check(&demos, &config, seed, out),
    }
}

/// Runs one invocation. `args` includes the program name; `seed` is the
/// value of `STAB_SEED`, if any.
pub fn run<I, T>(args: I, seed: Option<String>, out: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, seed, out) {
        Ok(code) => code,
        Err(e) => {
            match &e {
                CliError::Io(msg) | CliError::Validation(msg) => eprintln!("error: {msg}"),
            }
            e.exit_code()
        }
    }
}
