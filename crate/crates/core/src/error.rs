use sparsect_neural::NeuralError;
use thiserror::Error;

use crate::dgr::RunHistory;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("optimization diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        history: Box<RunHistory>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
