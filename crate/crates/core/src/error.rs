use std::io;

use thiserror::Error;

/// Errors produced by network construction, learning, traversal and file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("vertex {0} does not exist")]
    InvalidVertex(usize),
    #[error("self-loop at vertex {0} is not allowed")]
    SelfLoop(usize),
    #[error("edge {0} <-> {1} already exists")]
    DuplicateEdge(usize, usize),
    #[error("vertex {0} has no first-order neighbors")]
    IsolatedVertex(usize),
    #[error("network has no vertices")]
    EmptyNetwork,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
