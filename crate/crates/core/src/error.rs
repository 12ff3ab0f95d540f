use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration; `path` names the offending field.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: usize,
        actual: usize,
    },

    /// A non-finite value appeared at the named node of the computation.
    #[error("numeric error at {node}: {detail}")]
    Numeric { node: String, detail: String },

    /// An environment invariant was violated (masked action, stepping a finished state).
    #[error("environment logic error: {0}")]
    Env(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("instance too large: more than {cap} trajectories")]
    InstanceTooLarge { cap: usize },

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("scorer error: {0}")]
    Scorer(String),

    #[error("stage {0} is frozen")]
    Frozen(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn numeric(node: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            node: node.into(),
            detail: detail.into(),
        }
    }

    /// Process exit code for the CLI: 2 for configuration problems, 3 for numeric aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Numeric { .. } => 3,
            _ => 1,
        }
    }
}
