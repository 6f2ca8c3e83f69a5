use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] trajkit_autodiff::Error),

    #[error(transparent)]
    Core(#[from] trajkit_core::Error),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown pretraining task {0:?}")]
    UnknownTask(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
