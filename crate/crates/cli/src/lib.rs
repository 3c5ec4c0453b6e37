//! The `dpp` command-line tool as a library, so tests can drive commands
//! without spawning processes.

pub mod commands;
pub mod config;
pub mod output;

use std::process::ExitCode;

use clap::Parser;
use dpp_core::DppError;

use config::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or inconsistent options.
    #[error("{0}")]
    Usage(String),
    /// Sampler, numerical or I/O failure.
    #[error("{0}")]
    Run(String),
    /// The validation suite ran but some checks failed.
    #[error("validation failed: {0}")]
    ChecksFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) | CliError::ChecksFailed(_) => 1,
        }
    }
}

impl From<DppError> for CliError {
    fn from(e: DppError) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sample(args) => commands::cmd_sample(&args.resolve()?).map(drop),
        Command::Validate(args) => commands::cmd_validate(&args.resolve()).map(drop),
        Command::Compare(args) => commands::cmd_compare(&args.resolve()?).map(drop),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // help and version print to stdout and exit 0; usage errors exit 2
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("run `dpp <command> --help` for usage");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
