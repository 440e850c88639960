use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core library.
///
/// Variants are grouped by the CLI exit-code class they map to: configuration
/// and usage problems, malformed or inconsistent data, and numerical failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid measure: {0}")]
    Measure(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 usage/config, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Dimension(_) => 2,
            Error::Io { .. }
            | Error::Format(_)
            | Error::Length { .. }
            | Error::Data(_)
            | Error::Measure(_) => 3,
            Error::Numerical(_) => 4,
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Length { .. } => "length",
            Error::Data(_) => "data",
            Error::Dimension(_) => "dimension",
            Error::Config(_) => "config",
            Error::Measure(_) => "measure",
            Error::Numerical(_) => "numerical",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension(format!(
            "{what}: expected {expected}, found {found}"
        )));
    }
    Ok(())
}
