//! Library side of the `credtrack` binary, exposed so that integration tests
//! can drive commands in-process.

pub mod args;
mod commands;
pub mod config;
pub mod manifest;

use std::fmt;

pub use args::{Cli, Command};
pub use commands::run;
pub use config::RunConfig;
pub use manifest::{OutputFile, RunManifest};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration.
    Usage(String),
    Engine(credtrack_core::Error),
    Io(std::io::Error),
}

impl CliError {
    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        use credtrack_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Engine(E::InvalidConfig(_) | E::InvalidScript(_) | E::Toml(_) | E::UnknownOp(_)) => 2,
            CliError::Engine(_) | CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Engine(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<credtrack_core::Error> for CliError {
    fn from(e: credtrack_core::Error) -> Self {
        CliError::Engine(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}
