use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration value.
    #[error("config: {0}")]
    Config(String),

    /// Matrix/vector dimension mismatch.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A linear system stayed singular after diagonal loading.
    #[error("singular system: {0}")]
    Singular(String),

    /// Requested code or pilot structure cannot be built.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Malformed input file.
    #[error("parse: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
