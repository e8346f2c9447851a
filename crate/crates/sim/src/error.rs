use std::path::PathBuf;

use thiserror::Error;

use crate::types::ActionCommand;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("could not place {what} after {attempts} attempts (seed {seed})")]
    Placement {
        seed: u64,
        what: String,
        attempts: usize,
    },
    #[error("invalid object count {n} for {env}: {rule}")]
    ObjectCount { env: String, n: usize, rule: String },
    #[error("action {cmd} violates precondition: {rule}")]
    Precondition { cmd: String, rule: String },
    #[error("concurrent actions conflict on object {object}")]
    Conflict { object: u32 },
    #[error("word `{word}` is not in the `{clause}` dictionary")]
    Vocabulary { clause: String, word: String },
    #[error("word `{word}` already present in the `{clause}` dictionary")]
    DuplicateWord { clause: String, word: String },
    #[error("unknown clause `{0}`")]
    UnknownClause(String),
    #[error("malformed clause encoding: {0}")]
    Encoding(String),
    #[error("output path {0} already exists (pass overwrite to replace it)")]
    OutputExists(PathBuf),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("json error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl SimError {
    pub(crate) fn precondition(cmd: &ActionCommand, rule: impl Into<String>) -> Self {
        Self::Precondition {
            cmd: cmd.to_string(),
            rule: rule.into(),
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
