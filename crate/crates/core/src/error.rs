//! Error type shared across the library.
//!
//! Every failure is classified into one of three categories that map onto the
//! CLI exit codes: configuration (2), data (3), numerical (4). The category is
//! part of the contract: callers dispatch on it, and the binary prints a
//! single machine-parseable line `error[<category>]: <message>`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad thresholds, unknown scheme names, missing
    /// required settings. Exit code 2.
    #[error("config: {0}")]
    Config(String),

    /// Malformed or insufficient input data: parse failures, shape
    /// mismatches, degenerate columns, unknown identifiers. Exit code 3.
    #[error("data: {0}")]
    Data(String),

    /// Numerical failure: singular systems, zero variance where a ratio is
    /// required, non-convergence. Exit code 4.
    #[error("numerical: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code for the CLI. I/O problems count as data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Numerical(_) => 4,
        }
    }

    /// Short category tag used in the single-line CLI error output.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data(_) | Error::Io(_) => "data",
            Error::Numerical(_) => "numerical",
        }
    }

    /// The message without its category prefix, for `error[<category>]:
    /// <message>` lines where the category is already printed.
    pub fn message(&self) -> String {
        match self {
            Error::Config(m) | Error::Data(m) | Error::Numerical(m) => m.clone(),
            Error::Io(e) => e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
