use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at row {row}, column {column}: {detail}")]
    Parse {
        row: usize,
        column: String,
        detail: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("recourse not applicable: {0}")]
    NotApplicable(String),

    #[error("numerical failure at iteration {iteration}: {detail}")]
    Numerical { iteration: usize, detail: String },

    #[error("missing artifact {path} (produced by `{stage}`)")]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("unsupported artifact format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::Dimension { expected, got })
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Format(_) => 2,
            Error::MissingArtifact { .. } => 3,
            Error::Numerical { .. } => 4,
            _ => 1,
        }
    }
}
