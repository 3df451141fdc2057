use std::io;

use crate::checkpoint::FormatError;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Inapplicable(String),
    #[error("non-finite loss in term `{term}` at step {step}")]
    NonFinite { step: u64, term: &'static str },
    #[error("checkpoint format error: {0}")]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] swd_core::Error),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Inapplicable(_) => 2,
            CliError::NonFinite { .. } => 3,
            _ => 1,
        }
    }
}
