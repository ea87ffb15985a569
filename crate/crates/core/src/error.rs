use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator and its data/IO layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix dimensions disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A state variable became NaN or infinite; the simulation must stop.
    #[error("numerical fault: {0}")]
    Numerical(String),
    /// Bad user-supplied data or parameters.
    #[error("invalid input: {0}")]
    Input(String),
    /// An operation was called without a prerequisite it relies on.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Shape(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}
