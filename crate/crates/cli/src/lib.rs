//! Command-line orchestration for the `nbshift` laboratory.
//!
//! [`run`] dispatches a [`RunConfig`] to the named command, writes the report
//! and its data files into the output directory and hands the report back.
//! Exit codes: 0 all checks pass, 1 some check fails, 2 configuration error,
//! 3 runtime or I/O error.

pub mod commands;
pub mod config;

use std::fmt;
use std::path::Path;

use nbshift::report::Report;

pub use config::{Command, Format, Params, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(nbshift::Error),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<nbshift::Error> for CliError {
    fn from(e: nbshift::Error) -> Self {
        match e {
            nbshift::Error::Config(m) => CliError::Config(m),
            nbshift::Error::Io(m) => CliError::Io(m),
            other => CliError::Runtime(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 3,
        }
    }
}

pub fn exit_code(report: &Report) -> i32 {
    if report.all_pass() {
        0
    } else {
        1
    }
}

/// File name of the report for `command` in the given format.
pub fn report_file_name(command: Command, format: Format) -> String {
    match format {
        Format::Json => format!("{}-report.json", command.name()),
        Format::Csv => format!("{}-report.csv", command.name()),
    }
}

/// Runs the command, writes everything under the output directory and
/// returns the report. `config.params` comes back with all defaults filled.
pub fn run(config: &mut RunConfig) -> Result<Report, CliError> {
    let format = *config.params.format.get_or_insert(Format::Json);
    let outcome = commands::dispatch(config.command, &mut config.params)?;
    let dir = config.params.out_dir();
    std::fs::create_dir_all(&dir)?;
    let mut report = outcome.report;
    for (name, bytes) in &outcome.files {
        write_file(&dir.join(name), bytes)?;
        report.artifacts.push(name.clone());
    }
    let name = report_file_name(config.command, format);
    let body = match format {
        Format::Json => report.to_json()?,
        Format::Csv => report.metrics_csv()?,
    };
    write_file(&dir.join(&name), body.as_bytes())?;
    Ok(report)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
