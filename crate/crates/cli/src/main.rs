//! `loewner`: command-line front end of the Loewner chain library.
//!
//! Exit codes: 0 pass, 1 usage or configuration error, 2 failed
//! mathematical check, 3 numerical failure.

mod args;
mod commands;
mod output;
mod points;

use std::fmt::Display;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_CHECK_FAILED: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn internal(err: impl Display) -> Self {
        Self { code: EXIT_NUMERICAL, message: err.to_string() }
    }
}

impl From<loewner::Error> for CliError {
    fn from(err: loewner::Error) -> Self {
        use loewner::Error as E;
        let code = if err.is_numerical() {
            EXIT_NUMERICAL
        } else {
            match err {
                E::InvalidInput(_)
                | E::Linalg(_)
                | E::UnknownFamily(_)
                | E::BadParameter { .. }
                | E::FieldFile(_)
                | E::BeyondHorizon { .. } => EXIT_USAGE,
                _ => EXIT_CHECK_FAILED,
            }
        };
        Self { code, message: err.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::from(EXIT_PASS),
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
