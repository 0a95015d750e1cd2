//! Command-line harness for the hscg solvers.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric
//! failure, 4 failed verification check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod problem;
pub mod runner;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::SolverKind;
use crate::error::CliError;
use crate::runner::Overrides;

#[derive(Debug, Parser)]
#[command(
    name = "hscg",
    version,
    about = "Run and verify smoothing hybrid variance-reduced SGD experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Maximum number of runs executed in parallel.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Iterations between metric records.
    #[arg(long)]
    pub cadence: Option<usize>,
    /// Samples used for metrics (full data when omitted).
    #[arg(long)]
    pub mega_batch: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            jobs: self.jobs,
            cadence: self.cadence,
            mega_batch: self.mega_batch,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute every (solver, seed) run of the configuration.
    Run(Common),
    /// Run two or more solvers and merge their traces.
    Compare(Common),
    /// Finite-difference checks of the problem oracles.
    Gradcheck(Common),
    /// Approximate KKT residual of a stored run.
    Kkt {
        #[command(flatten)]
        common: Common,
        /// Directory holding the run artifacts.
        #[arg(long)]
        run_dir: PathBuf,
        /// Solver whose run is examined (first configured solver by default).
        #[arg(long, value_parser = parse_solver)]
        solver: Option<SolverKind>,
    },
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    match s {
        "hscg" => Ok(SolverKind::Hscg),
        "hscg-restart" => Ok(SolverKind::HscgRestart),
        "scg" => Ok(SolverKind::Scg),
        "civr" => Ok(SolverKind::Civr),
        other => Err(format!("unknown solver {other}")),
    }
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(c) => commands::cmd_run(&c.config, &c.overrides()).map(|_| ()),
        Command::Compare(c) => commands::cmd_compare(&c.config, &c.overrides()).map(|_| ()),
        Command::Gradcheck(c) => commands::cmd_gradcheck(&c.config, &c.overrides()).map(|_| ()),
        Command::Kkt {
            common,
            run_dir,
            solver,
        } => {
            let args = commands::KktArgs {
                run_dir,
                config: &common.config,
                solver: *solver,
            };
            commands::cmd_kkt(&args, &common.overrides()).map(|_| ())
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
