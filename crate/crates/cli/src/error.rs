use std::path::Path;
use std::process::ExitCode;

use able_core::Error as CoreError;
use able_pde::PdeError;
use able_train::TrainError;
use able_verify::VerifyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Some check did not pass; the report has already been printed.
    #[error("{0}")]
    Check(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        })
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io(_) | CoreError::Checkpoint(_) => CliError::Io(e.to_string()),
            CoreError::SizeLimit(_) | CoreError::UnsupportedSize(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<PdeError> for CliError {
    fn from(e: PdeError) -> Self {
        match e {
            PdeError::Core(c) => c.into(),
            PdeError::Io(_) | PdeError::Format(_) => CliError::Io(e.to_string()),
            PdeError::Domain(_) => CliError::Usage(e.to_string()),
            PdeError::SolverFailure { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Core(c) => c.into(),
            TrainError::Data(d) => d.into(),
            TrainError::Io(_) => CliError::Io(e.to_string()),
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            TrainError::Domain(_) | TrainError::NonFinite { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Core(c) => c.into(),
            VerifyError::Train(t) => t.into(),
            VerifyError::Domain(_) => CliError::Usage(e.to_string()),
            VerifyError::Degenerate(_) => CliError::Numerical(e.to_string()),
        }
    }
}
