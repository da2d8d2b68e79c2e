use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation: unknown flag, missing argument, malformed value.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] artembed::Error),
    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: artembed::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn in_file(path: &Path, source: artembed::Error) -> Self {
        CliError::InFile {
            path: path.display().to_string(),
            source,
        }
    }

    /// 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
