use std::path::PathBuf;

use thiserror::Error;

/// Harness failures, grouped by the process exit code they map to.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}:{line}: parse error: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("{path}: schema error: {msg}")]
    Schema { path: PathBuf, msg: String },
    #[error("{path}: sample interval jitter {jitter:.3e} exceeds tolerance at row {row}")]
    Jitter { path: PathBuf, row: usize, jitter: f64 },
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric breakdown: {0}")]
    Numeric(#[from] gmmee::Error),
    #[error("optimizer failed: {0}")]
    Optimizer(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::Parse { .. } | LabError::Schema { .. } | LabError::Jitter { .. } | LabError::Data(_) => 3,
            LabError::Numeric(_) | LabError::Optimizer(_) => 4,
            LabError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
