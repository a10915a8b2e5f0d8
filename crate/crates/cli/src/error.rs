use std::fmt;

use serde::Serialize;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Calibration(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Calibration(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Calibration(_) => "calibration",
            CliError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Calibration(m) | CliError::Io(m) => m,
        }
    }

    /// One-line JSON report for standard error.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            message: &'a str,
            exit_code: i32,
        }
        #[derive(Serialize)]
        struct Report<'a> {
            error: Body<'a>,
        }
        serde_json::to_string(&Report {
            error: Body { kind: self.kind(), message: self.message(), exit_code: self.exit_code() },
        })
        .expect("error report serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

/// Model errors raised while running are treated as bad configuration,
/// except calibration failures.
impl From<qmagsim_core::Error> for CliError {
    fn from(e: qmagsim_core::Error) -> Self {
        match e {
            qmagsim_core::Error::Calibration(m) => CliError::Calibration(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
