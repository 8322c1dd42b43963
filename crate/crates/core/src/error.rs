//! Error type shared by every module in the crate.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the library, grouped by the contract they break.
#[derive(Debug)]
pub enum Error {
    /// Tensor or matrix extents do not line up.
    Dimension(String),
    /// An argument violates a precondition (non-positive count, bad fraction, ...).
    Parameter(String),
    /// A dataset is malformed: bad labels, wrong pixel counts, mismatched stages.
    Data(String),
    /// An API contract was violated (non-scalar loss, tensors from different tapes).
    Contract(String),
    /// Numerical failure: NaN coordinates, non-converged searches.
    Numerical(String),
    /// Training aborted; carries the step at which it happened.
    Training { step: u64, detail: String },
    /// Experiment configuration is invalid.
    Config(String),
    /// File I/O failure with the path involved.
    Io { path: String, source: std::io::Error },
}

impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 config, 2 training/numerical, 3 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Parameter(_) => 1,
            Error::Io { .. } => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::Parameter(msg) => write!(f, "parameter error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Contract(msg) => write!(f, "contract error: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical error: {msg}"),
            Error::Training { step, detail } => {
                write!(f, "training error at step {step}: {detail}")
            }
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io { path, source } => write!(f, "i/o error on {path}: {source}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
