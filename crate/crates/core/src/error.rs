use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} outside sequence range {min}..={max}")]
    Range {
        index: usize,
        min: usize,
        max: usize,
    },

    #[error("resource budget exceeded: {0}")]
    Resource(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
