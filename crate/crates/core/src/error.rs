use std::path::PathBuf;

use crate::harness::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller supplied something outside an operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A named configuration field failed validation.
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("numeric failure: {message} (residual {residual:e})")]
    NumericFailure { message: String, residual: f64 },

    /// The iterate blew past the divergence guard; the partial trajectory is kept.
    #[error("run diverged at iteration {iteration}: err_spec = {err_spec:e}")]
    Diverged {
        iteration: usize,
        err_spec: f64,
        partial: Box<Trajectory>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("could not parse {what}: {reason}")]
    Parse { what: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 1 for validation problems, 2 for numeric ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericFailure { .. } | Error::Diverged { .. } => 2,
            _ => 1,
        }
    }
}
