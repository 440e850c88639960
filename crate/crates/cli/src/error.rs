use std::fmt;

use serde::Serialize;

/// Failure reported as one JSON line on stderr plus an exit code.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: "config",
            message: message.into(),
            exit_code: 2,
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: "data",
            message: message.into(),
            exit_code: 3,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<saeft_core::Error> for CliError {
    fn from(e: saeft_core::Error) -> Self {
        Self {
            kind: e.kind(),
            message: e.to_string(),
            exit_code: e.exit_code(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            kind: "io",
            message: e.to_string(),
            exit_code: 3,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self {
            kind: "io",
            message: e.to_string(),
            exit_code: 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
