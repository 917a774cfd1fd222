//! Error types shared across the crate.
//!
//! Every fallible operation returns [`Error`]. The variants map onto the
//! process exit codes used by the CLI: usage mistakes exit 1, anything wrong
//! with input data or files exits 2, and numerical failures (divergence,
//! degenerate denominators) exit 3.

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// The caller asked for something contradictory or unsupported.
    #[error("usage error: {0}")]
    Usage(String),

    /// Input data violated a contract (bad CSV, gaps, shape mismatches, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A computation produced or encountered non-finite / degenerate values.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Filesystem access failed.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Convenience constructor for [`Error::Io`].
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code the CLI reports for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Data(_) | Error::Io { .. } => 2,
            Error::Numeric(_) => 3,
        }
    }
}
