mod commands;
mod settings;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use settings::{resolve, Cli};

/// Configuration problems exit with status 2, everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Config { field: &'static str, message: String },
    Runtime(textlime::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { field, message } => write!(f, "config error in `{field}`: {message}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<textlime::Error> for CliError {
    fn from(e: textlime::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let settings = resolve(cli)?;
    if let Some(threads) = settings.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config { field: "threads", message: e.to_string() })?;
    }
    commands::dispatch(&cli.command, &settings)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("textlime: {e}");
            match e {
                CliError::Config { .. } => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::FAILURE,
            }
        }
    }
}
