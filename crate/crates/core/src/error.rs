use thiserror::Error;

/// Errors raised by the solvers, oracles and loaders of this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error(
        "MDP is not balanced: in state {state}, actions {action_a} and {action_b} have Q* values differing by {gap:e}"
    )]
    NotBalanced {
        state: usize,
        action_a: usize,
        action_b: usize,
        gap: f64,
    },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("property check failed: {0}")]
    PropertyFailure(String),

    #[error("LP solver breakdown: {message}")]
    Solver { message: String, pivot_log: Vec<String> },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
