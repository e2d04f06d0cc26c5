use std::io;

use thiserror::Error;

/// Errors raised anywhere in the simulator, agent and harness stack.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, indices or hyperparameters that cannot describe a valid setup.
    #[error("configuration error: {0}")]
    Config(String),
    /// Observation data the encoders cannot accept (NaN, infinities).
    #[error("input error: {0}")]
    Input(String),
    /// An API called out of order, e.g. stepping a finished episode.
    #[error("usage error: {0}")]
    Usage(String),
    /// Malformed checkpoint, CSV or config text.
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
