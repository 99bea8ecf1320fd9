use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("theorem check failed: {0}")]
    Violation(String),
    #[error(transparent)]
    Core(#[from] fedlrt_core::Error),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        HarnessError::Format {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    /// Process exit status: 1 configuration or input problems, 2 numerical
    /// failure, 3 theorem violation.
    pub fn exit_code(&self) -> i32 {
        use fedlrt_core::Error as E;
        match self {
            HarnessError::Config(_)
            | HarnessError::Io { .. }
            | HarnessError::Format { .. }
            | HarnessError::Schema(_)
            | HarnessError::Core(E::Argument(_) | E::Dimension(_)) => 1,
            HarnessError::Numerical(_) | HarnessError::Core(_) => 2,
            HarnessError::Violation(_) => 3,
        }
    }
}
