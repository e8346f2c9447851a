use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("expected {expected} action slots, got {got}")]
    Slots { expected: String, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] acgn_sim::SimError),
    #[error(transparent)]
    Tensor(#[from] acgn_tensor::TensorError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("non-finite loss {loss} at step {step}")]
    NonFinite { step: u64, loss: f64 },
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown node {node} in session `{session}`")]
    UnknownNode { session: String, node: u32 },
    #[error("session `{0}` reached its node limit")]
    NodeLimit(String),
    #[error("session store is full ({0} sessions)")]
    Capacity(usize),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Self {
        let path = path.into();
        move |source| Self::Json { path, source }
    }
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
