//! Command-line front end for `selfpulse`.
//!
//! Every command resolves its parameters (flag > config file > built-in
//! default), computes its outputs in memory, then writes them together with
//! a [`RunManifest`](manifest::RunManifest). Passing a manifest back through
//! `--config` replays the run.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;

use clap::Parser;

pub mod cli;
pub mod commands;
pub mod manifest;
pub mod output;
pub mod plot;

pub use cli::Cli;
pub use output::Format;

/// Marks an error that should exit with the numerical-failure code even
/// though it did not come from the numerics library.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// Maps an error chain onto the exit-code contract.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<NumericalFailure>() {
            return EXIT_NUMERICAL;
        }
        if let Some(e) = cause.downcast_ref::<selfpulse::Error>() {
            return if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            };
        }
    }
    EXIT_USAGE
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli::execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
