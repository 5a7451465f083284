use std::path::PathBuf;

use certsearch_core::Error as ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    Model(ModelError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}

impl AppError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        AppError::Io {
            context: context.into(),
            source,
        }
    }

    /// 2 for bad input, 3 when a relaxation could not be solved, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config { .. } | AppError::Validation(_) => 2,
            AppError::Solver(_) => 3,
            AppError::Model(e) if is_solver_error(e) => 3,
            AppError::Model(_) => 2,
            AppError::Io { .. } | AppError::Format(_) => 1,
        }
    }
}

fn is_solver_error(e: &ModelError) -> bool {
    matches!(
        e,
        ModelError::RankDeficient { .. }
            | ModelError::InconsistentRows(..)
            | ModelError::SchurBreakdown(_)
            | ModelError::NonFiniteLoss { .. }
    )
}

impl From<ModelError> for AppError {
    fn from(e: ModelError) -> Self {
        AppError::Model(e)
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::Format(e.to_string())
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Format(e.to_string())
    }
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;
