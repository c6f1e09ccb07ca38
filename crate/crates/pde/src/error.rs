use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error(transparent)]
    Core(#[from] able_core::Error),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("solver failure at step {step}: {msg}")]
    SolverFailure { step: usize, msg: String },
    #[error("dataset format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for PdeError {
    fn from(e: std::io::Error) -> Self {
        PdeError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PdeError>;
