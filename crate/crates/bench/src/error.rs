use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] optlcms::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Usage(String),
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for an infeasible optimisation, 3 for unreadable or unwritable
    /// files (including corrupt structure files), 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Core(e) if e.is_infeasible() => 2,
            BenchError::Core(optlcms::Error::Format(_))
            | BenchError::Io { .. }
            | BenchError::Parse(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
