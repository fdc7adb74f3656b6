use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("odometry state is already initialized")]
    AlreadyInitialized,

    #[error("odometry state has not been initialized")]
    NotInitialized,

    #[error("config error: {0}")]
    Config(String),

    #[error("dataset error in {path}: {msg}")]
    Dataset { path: PathBuf, msg: String },

    #[error("pipeline failure: {0}")]
    Pipeline(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn dataset(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Dataset {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
