use std::path::PathBuf;

use thiserror::Error;

/// Unified error type for the whole library.
///
/// Variants split along the line the command-line tool cares about:
/// bad input (rejected before any numerics run) versus numerical failure
/// (a solve that started and could not finish to tolerance).
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Configuration validation failures, all of them, not just the first.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    /// An iterative solve hit its iteration cap.
    #[error("{context}: no convergence after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    /// NaN/Inf contamination, loss of positive definiteness, or a violated
    /// discrete invariant that indicates the computation cannot be trusted.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {}:{line}: {message}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    /// Process exit code the CLI maps this error to: 1 for rejected input,
    /// 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Validation(_) | Error::Io { .. } | Error::Parse { .. } => 1,
            Error::NoConvergence { .. } | Error::Numerical(_) => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
