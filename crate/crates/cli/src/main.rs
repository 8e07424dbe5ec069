//! `egoms` command-line tool.
//!
//! Exit codes: 0 success, 1 invalid arguments or configuration (usage on
//! standard error), 2 runtime failure.

mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use commands::{Cli, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 1,
                CliError::Core(ref c) if c.is_validation() => 1,
                CliError::Core(_) | CliError::Io(_) | CliError::ChecksFailed(_) => 2,
            })
        }
    }
}
