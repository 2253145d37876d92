use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the operation's domain (bad decision index,
    /// incompatible instances, order outside (0,1), ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter block violates an instance invariant.
    #[error("invalid instance: {0}")]
    Construction(String),

    /// Two decisions share the best expected reward (within 1e-9).
    #[error("invalid instance: optimal decision is not unique (top rewards differ by {gap:e})")]
    NonUniqueOptimum { gap: f64 },

    /// A grid family would exceed the configured instance cap.
    #[error("family too large: {count} instances exceeds the cap of {cap}")]
    Size { count: u128, cap: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("solver error: {0}")]
    Solver(String),

    /// Configuration problems, one message per violated rule.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn construction(msg: impl Into<String>) -> Self {
        Error::Construction(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
