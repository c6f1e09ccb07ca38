use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error(transparent)]
    Core(#[from] able_core::Error),
    #[error(transparent)]
    Train(#[from] able_train::TrainError),
    #[error("degenerate study: {0}")]
    Degenerate(String),
    #[error("invalid study parameters: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, VerifyError>;
