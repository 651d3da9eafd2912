use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },

    #[error("label {0:?} is not part of the label space")]
    LabelOutsideSpace(String),

    #[error("duplicate example id {0:?}")]
    DuplicateId(String),

    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("word {0:?} is not a biased word")]
    NotBiased(String),

    #[error("example {0:?} contains no biased word")]
    UnbiasedExample(String),

    #[error("example {0:?} is not a sentence pair")]
    NotPair(String),

    #[error("no weight for example {0:?}")]
    MissingWeight(String),

    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible synthetic configuration: {0}")]
    Infeasible(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
