use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("node {node} out of range for graph with {node_count} nodes")]
    NodeOutOfRange { node: usize, node_count: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("{path}:{line}: {message}")]
    Load {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("vocabulary: {0}")]
    Vocabulary(String),

    #[error("split: {0}")]
    Split(String),

    #[error("synthetic generator: {0}")]
    Synthetic(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("brute force refused: {0}")]
    Refused(String),

    #[error("invalid counterfactual: {0}")]
    InvalidCounterfactual(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("unknown corruption field `{0}`")]
    UnknownCorruptionField(String),

    #[error("run log: {0}")]
    RunLog(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
