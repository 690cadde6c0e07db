use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the scoring pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An input fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("not found: {0}")]
    NotFound(String),

    /// Invalid configuration (thresholds, budgets, generator specs).
    #[error("configuration error: {0}")]
    Config(String),

    /// A precondition on the current state was not met.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Structural validation failed; each entry carries a path to the offending entity.
    #[error("validation failed: {}", join_violations(.0))]
    Validation(Vec<crate::fabric::Violation>),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("out-of-order append for {scope_id}: {message}")]
    OutOfOrder { scope_id: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join_violations(v: &[crate::fabric::Violation]) -> String {
    v.iter()
        .map(|x| format!("{}: {}", x.path, x.message))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::NotFound(_) => "not_found",
            Error::Config(_) => "config",
            Error::Precondition(_) => "precondition",
            Error::Validation(_) => "validation",
            Error::Parse { .. } => "parse",
            Error::OutOfOrder { .. } => "out_of_order",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
