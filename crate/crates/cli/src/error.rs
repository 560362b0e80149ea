use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or out-of-range configuration; nothing was computed.
    #[error("configuration error: {0}")]
    Config(String),

    /// A computation failed after validation; partial output may exist.
    #[error("numerical failure: {0}")]
    Numerical(#[from] fgbif::Error),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Some outputs were written but at least one part of the run failed.
    #[error("partial failure: {0}")]
    Partial(String),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }

    /// 2 for configuration and output errors, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) | CliError::Partial(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
