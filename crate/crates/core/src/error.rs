use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine, model, or trainer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-parsable category used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidShape(_) => "shape",
            Error::InvalidConfig(_) => "config",
            Error::Domain(_) => "domain",
            Error::Parse { .. } => "parse",
            Error::Lookup(_) => "lookup",
            Error::NonFinite(_) => "numeric",
            Error::UnsupportedVariant(_) => "unsupported",
            Error::Incompatible(_) => "incompatible",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidShape(format!($($arg)*))
    };
}
pub(crate) use shape_err;
