use std::io;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] assim_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("threshold not met: {0}")]
    Threshold(String),
}

impl CliError {
    /// 0 success, 1 validation, 2 solver failure, 3 acceptance threshold.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(assim_core::Error::Solver { .. }) => 2,
            CliError::Threshold(_) => 3,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
