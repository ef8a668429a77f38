use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("scenario {scenario}: {source}")]
    Model {
        scenario: String,
        #[source]
        source: varorder::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode output: {0}")]
    Encode(String),
    #[error("scenario {scenario}: {failed} of {total} assertions failed")]
    Assertion { scenario: String, failed: usize, total: usize },
}

impl CliError {
    /// 1 config, 2 runtime (model or I/O), 3 failed assertion.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Model { .. } | CliError::Io { .. } | CliError::Encode(_) => 2,
            CliError::Assertion { .. } => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
