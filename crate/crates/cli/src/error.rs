use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] causalforge::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// 2 for bad input, 3 for failures inside the library.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(causalforge::Error::DesignSearchExhausted { .. }) | CliError::Internal(_) => 3,
            _ => 2,
        }
    }
}
