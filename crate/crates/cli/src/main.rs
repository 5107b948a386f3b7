//! `wsfl` command-line driver.
//!
//! Exit status: 0 on success, 1 for invalid input or usage, 2 for I/O
//! failures. Logs go to stderr; `WSFL_LOG` picks the level.

mod commands;
mod config;
mod overlay;

use std::process::ExitCode;

use clap::Parser;

use crate::commands::{Cli, CliError};

fn init_logging() {
    let env = env_logger::Env::new().filter_or("WSFL_LOG", "info");
    env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
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
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_io() => 2,
            CliError::Io(_) => 2,
            _ => 1,
        }
    }
}
