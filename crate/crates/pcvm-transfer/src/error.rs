//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by data ingestion, numerical routines and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file (bad cell, ragged row, bad sparse pair, ...).
    #[error("parse error: {0}")]
    Parse(String),

    /// Invalid run configuration (unknown method, empty grid, bad paths).
    #[error("config error: {0}")]
    Config(String),

    /// Structurally invalid arguments (dimension mismatch, out-of-range s,
    /// single-class labels, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical routine could not proceed (degenerate kernel, landmark
    /// block below the spectral floor, non-finite values).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Wraps an error with the pipeline stage it occurred in.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach the name of the pipeline stage an error occurred in.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code for the CLI: 1 for config/data problems, 2 for
    /// numerical failures inside a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse(_) | Error::Config(_) => 1,
            Error::InvalidInput(_) | Error::Numerical(_) => 2,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
