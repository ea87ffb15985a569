use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
    #[error("{0}")]
    Runtime(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad data: {0}")]
    Data(String),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Errors raised while reading datasets or artifacts count as I/O failures.
    pub fn data(e: lmsnn::Error) -> Self {
        match e {
            lmsnn::Error::Io { path, source } => CliError::Io { path, source },
            other => CliError::Data(other.to_string()),
        }
    }

    /// Process exit code: 1 validation, 2 runtime or numerical fault, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io { .. } | CliError::Data(_) => 3,
        }
    }
}

impl From<lmsnn::Error> for CliError {
    fn from(e: lmsnn::Error) -> Self {
        match e {
            lmsnn::Error::Io { path, source } => CliError::Io { path, source },
            other => CliError::Runtime(other.to_string()),
        }
    }
}
