use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI run. Each maps to a stable process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("unknown problem `{0}` (expected ball-linear, box-qp, rosenbrock-ball or nav)")]
    UnknownProblem(String),
    #[error("infeasible starting point: {0}")]
    InfeasibleStart(String),
    #[error("direction subproblem failed: {0}")]
    Subproblem(String),
    #[error("line search failed after the maximum number of halvings")]
    LineSearch,
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{0}")]
    BadInput(String),
    #[error("flow left the feasible set: {0}")]
    FlowBreach(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Usage(_) => 2,
            CliError::UnknownProblem(_) => 3,
            CliError::InfeasibleStart(_) => 4,
            CliError::Subproblem(_) => 5,
            CliError::LineSearch => 6,
            CliError::Io { .. } => 7,
            CliError::BadInput(_) => 8,
            CliError::FlowBreach(_) => 9,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: impl ToString) -> Self {
        CliError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
