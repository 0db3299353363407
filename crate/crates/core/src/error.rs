use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate labeling: every label is either absent or covers all positions")]
    DegenerateLabeling,

    #[error("sequence {id}: {source}")]
    Sequence {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("model file: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn in_sequence(self, id: &str) -> Self {
        match self {
            e @ Error::Sequence { .. } => e,
            e => Error::Sequence {
                id: id.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, looking through sequence wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Sequence { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code for the command-line tool:
    /// 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) => 1,
            Error::Numerical(_) | Error::DegenerateLabeling => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
