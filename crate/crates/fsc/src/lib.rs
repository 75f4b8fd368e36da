//! File formats and commands for the `fsc` binary.
//!
//! Configs are JSON, tabular inputs and plot data are CSV. Every output is a
//! pure function of the inputs and seeds, so repeated runs write identical
//! bytes.

pub mod commands;
pub mod config;
pub mod records;

use std::fs;
use std::path::Path;

/// Failure of a command, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: config, CSV, flags. Exit code 1.
    #[error("{0}")]
    Invalid(String),
    /// Anything that went wrong after the inputs were accepted. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }
}

impl From<fsc_core::Error> for CliError {
    fn from(e: fsc_core::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub(crate) fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn write_output(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn to_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}
