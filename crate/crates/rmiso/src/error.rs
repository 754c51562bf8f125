//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad weights, mismatched kinds, missing graph, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input outside an operation's domain (dimension mismatch, infeasible point, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative kernel hit its iteration cap before reaching tolerance.
    #[error("solver did not converge: {context} (residual {residual:.3e})")]
    NoConvergence { context: String, residual: f64 },

    /// A Monte-Carlo recurrence estimate had too many return times cut off by
    /// the horizon to be trusted.
    #[error(
        "recurrence estimate censored: {censored} of {observations} return times \
         exceeded the horizon (fraction {fraction:.4})"
    )]
    Censored {
        censored: u64,
        observations: u64,
        fraction: f64,
    },

    /// Failure reading or writing a file.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed text input (edge lists, CSV, classification rows, configs).
    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Malformed or incompatible binary snapshot.
    #[error("snapshot error: {0}")]
    Snapshot(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
