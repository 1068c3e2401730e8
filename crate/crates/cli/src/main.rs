//! colloc-eval: evaluate low-cost PM2.5 sensors collocated with a reference monitor.

mod commands;
mod manifest;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_EMPTY: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

/// Failure to write results. Always an internal error.
#[derive(Debug)]
pub struct OutputError(pub String);

impl fmt::Display for OutputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for OutputError {}

/// Bad flags or inputs the core did not see.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<OutputError>() {
            return EXIT_INTERNAL;
        }
        if cause.is::<UsageError>() {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<colloc_core::Error>() {
            return if e.is_empty_result() { EXIT_EMPTY } else { EXIT_VALIDATION };
        }
    }
    EXIT_INTERNAL
}

fn configure_threads() -> Result<(), UsageError> {
    let Ok(raw) = std::env::var("COLLOC_EVAL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("COLLOC_EVAL_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| UsageError(format!("cannot configure thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match commands::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
