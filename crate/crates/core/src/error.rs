use thiserror::Error;

#[derive(Debug, Error)]
pub enum PprError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("matrix is zero")]
    ZeroMatrix,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PprError>;
