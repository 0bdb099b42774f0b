//! Command-line front end for the `rollwave` library.
//!
//! Exit codes: 0 success, 1 invalid input or domain error, 2 numerical
//! non-convergence, 3 internal error.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};

use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] rollwave::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_INPUT,
            CliError::Lib(e) if e.is_nonconvergence() => EXIT_NONCONVERGENCE,
            CliError::Lib(_) => EXIT_INPUT,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

/// Parses `argv`, runs the subcommand, and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match config::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| dispatch(&matches)));
    match outcome {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            let _ = writeln!(std::io::stderr(), "rollwave: {e}");
            e.exit_code()
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            let _ = writeln!(std::io::stderr(), "rollwave: internal error: {msg}");
            EXIT_INTERNAL
        }
    }
}

fn read_text(path: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {path}: {e}")))
}

fn env_threads() -> Option<String> {
    std::env::var("ROLLWAVE_THREADS").ok().filter(|s| !s.trim().is_empty())
}

fn dispatch(m: &clap::ArgMatches) -> Result<(), CliError> {
    let cfg = match m.subcommand() {
        Some((name, sm)) => {
            let sub = config::find(name).ok_or_else(|| CliError::Internal(format!("unregistered subcommand {name}")))?;
            let file = sm.get_one::<String>("config").or_else(|| m.get_one::<String>("config")).map(|p| read_text(p)).transpose()?;
            RunConfig::resolve(sub, file.as_deref(), Some(sm), env_threads())?
        }
        None => {
            let path = m.get_one::<String>("config").ok_or_else(|| CliError::Usage("missing subcommand (see --help)".into()))?;
            let text = read_text(path)?;
            let name = rollwave::model::parse_kv(&text)?
                .into_iter()
                .find(|(k, _)| k == "command")
                .map(|(_, v)| v)
                .ok_or_else(|| CliError::Usage(format!("{path} has no `command` entry; name a subcommand")))?;
            let sub = config::find(&name).ok_or_else(|| CliError::Usage(format!("unknown subcommand `{name}` in {path}")))?;
            RunConfig::resolve(sub, Some(&text), None, env_threads())?
        }
    };
    commands::execute(&cfg)
}
