mod args;
mod commands;
mod manifest;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;
use lipbound::Error;

use args::{Cli, Command};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERICAL, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NotConverged { .. } => EXIT_NUMERICAL,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::Format { .. }
            | Error::Consistency(_)
            | Error::Shape(_) => EXIT_DATA,
            Error::InvalidInput(_)
            | Error::SizeLimit { .. }
            | Error::Unsupported(_)
            | Error::Config(_)
            | Error::Domain(_) => EXIT_USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Bound(a) => commands::bound(&a),
        Command::Empirical(a) => commands::empirical(&a),
        Command::Convert(a) => commands::convert(&a),
        Command::Spectrum(a) => commands::spectrum(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
