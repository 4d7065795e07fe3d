//! The `spiking-ctc` command.
//!
//! Every subcommand reads one TOML file (`--config`) whose unknown keys are
//! rejected, writes into `--out`, and takes `--seed` as an override of the
//! seed in the file. Each flag can also be set through an environment
//! variable: `SPIKING_CTC_CONFIG`, `SPIKING_CTC_OUT`, `SPIKING_CTC_SEED`,
//! `SPIKING_CTC_JOBS`.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 on I/O
//! errors, runtime failures and divergence.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{
    EvalCommandConfig, FeaturesCommandConfig, GenDataConfig, SimulateConfig, TrainCommandConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "spiking-ctc", version, about = "Spiking recurrent encoders trained with CTC")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true, env = "SPIKING_CTC_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "SPIKING_CTC_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seed given in the configuration.
    #[arg(long, global = true, env = "SPIKING_CTC_SEED")]
    pub seed: Option<u64>,
    /// Concurrent runs for `grid`.
    #[arg(long, global = true, env = "SPIKING_CTC_JOBS", default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic train/test dataset.
    GenData,
    /// Train an encoder and write metrics and a checkpoint.
    Train,
    /// Evaluate a checkpoint on a dataset.
    Eval,
    /// Run the layer-replacement grid.
    Grid,
    /// Record gradient norms of nonspiking, spiking and LSTM encoders.
    Diagnose,
    /// Integrate a single LIF neuron and write its trace.
    Simulate,
    /// Extract log-mel features from a WAV file.
    Features,
}

/// Failure of a subcommand, already mapped to its exit code.
#[derive(Debug)]
pub struct CommandError {
    pub code: i32,
    pub message: String,
}

impl CommandError {
    fn usage(message: impl Into<String>) -> Self {
        CommandError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        CommandError {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<crate::Error> for CommandError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::Config(_) => CommandError::usage(e.to_string()),
            _ => CommandError::runtime(e.to_string()),
        }
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code. Messages go to stdout and stderr.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::GenData => commands::gen_data(cli),
        Command::Train => commands::train(cli),
        Command::Eval => commands::eval(cli),
        Command::Grid => commands::grid(cli),
        Command::Diagnose => commands::diagnose(cli),
        Command::Simulate => commands::simulate(cli),
        Command::Features => commands::features(cli),
    }
}
