use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cgprune_core::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stale artifact: {0}")]
    Stale(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use cgprune_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_USAGE,
            CliError::Stale(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::Core(e) => match e {
                E::Usage(_) => EXIT_USAGE,
                E::Numeric { .. } => EXIT_NUMERIC,
                _ => EXIT_DATA,
            },
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
