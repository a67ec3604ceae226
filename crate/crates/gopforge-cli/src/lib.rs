//! Library side of the `gopforge` command-line tool: configuration,
//! model persistence, run orchestration and report aggregation. The binary
//! in `main.rs` is a thin clap wrapper over these modules.

use std::fmt;

pub mod config;
pub mod eval;
pub mod model_io;
pub mod report;
pub mod run;

/// CLI failure classes with their process exit codes: configuration and
/// validation problems exit 2, progression/training failures exit 3, I/O
/// and corruption exit 4.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(String),
    Io(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn run(msg: impl Into<String>) -> Self {
        CliError::Run(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {}", m),
            CliError::Run(m) => write!(f, "run error: {}", m),
            CliError::Io(m) => write!(f, "i/o error: {}", m),
        }
    }
}

impl std::error::Error for CliError {}
