//! CLI error type carrying the process exit code.

use std::fmt;

/// Exit codes: 0 success, 2 usage/config, 3 data error, 4 numerical failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Config,
    Data,
    Numerical,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Config => 2,
            ExitKind::Data => 3,
            ExitKind::Numerical => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { kind: ExitKind::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { kind: ExitKind::Data, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError { kind: ExitKind::Numerical, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(format!("io error: {e}"))
    }
}

impl From<hairpin_core::Error> for CliError {
    fn from(e: hairpin_core::Error) -> Self {
        use hairpin_core::Error as E;
        match e {
            E::DimensionMismatch { .. } | E::EmptyDataset | E::BadFractions { .. } => {
                CliError::data(e.to_string())
            }
            E::NonProbability { .. } | E::BoundaryParameter { .. } | E::UnknownParameter { .. } => {
                CliError::config(e.to_string())
            }
            E::AbsorbingChain { .. }
            | E::EnumerationTooLarge { .. }
            | E::TooFewDraws { .. }
            | E::InvalidInit { .. } => CliError::numerical(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
