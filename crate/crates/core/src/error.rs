//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node {node} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { node: usize, num_nodes: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("no ground truth available for node {0}")]
    NoGroundTruth(usize),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("bundle error: {0}")]
    Bundle(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("records error: {0}")]
    Records(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
