use thiserror::Error;

use crate::round::Phase;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error(transparent)]
    Core(#[from] bspow_core::Error),
    #[error("operation needs phase {expected:?}, round is in {found:?}")]
    Phase { expected: Phase, found: Phase },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed chain: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ChainError>;
