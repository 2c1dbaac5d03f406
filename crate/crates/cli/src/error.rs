use covbloch_core::bloch::BlochError;
use covbloch_core::covering::CoveringError;
use covbloch_core::harmonic::HarmonicError;
use covbloch_core::operators::OperatorError;
use covbloch_core::schulman::SchulmanError;
use thiserror::Error;

/// Failure of a run, mapped onto the process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration or a violated precondition (exit code 2).
    #[error("validation error: {0}")]
    Validation(String),
    /// A numerical routine failed (exit code 3).
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Output could not be written (exit code 2).
    #[error("output error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<OperatorError> for CliError {
    fn from(e: OperatorError) -> Self {
        match e {
            OperatorError::Eigensolver(_) => CliError::Numerical(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<HarmonicError> for CliError {
    fn from(e: HarmonicError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CoveringError> for CliError {
    fn from(e: CoveringError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<BlochError> for CliError {
    fn from(e: BlochError) -> Self {
        match e {
            BlochError::Operator(op) => op.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<SchulmanError> for CliError {
    fn from(e: SchulmanError) -> Self {
        match e {
            SchulmanError::Operator(op) => op.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
