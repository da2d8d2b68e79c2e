use std::io;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// The bytes on disk do not follow the expected layout.
    #[error("format error: {0}")]
    Format(String),

    /// A data-structure invariant does not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero-norm vector{}", .context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    ZeroVector { context: Option<String> },

    #[error("non-finite value {what}")]
    NonFinite { what: String },

    #[error("unknown task {0:?}")]
    UnknownTask(String),

    #[error("label {label:?} is not a class of task {task:?}")]
    UnknownLabel { task: String, label: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn zero_vector(context: impl Into<String>) -> Self {
        Error::ZeroVector {
            context: Some(context.into()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
