use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data in {context}: {message}")]
    Malformed { context: String, message: String },

    #[error("subject {subject_id} has an incomplete grid ({found} of {expected} directions)")]
    IncompleteGrid {
        subject_id: String,
        found: usize,
        expected: usize,
    },

    #[error("anthropometric parameter {index} has zero standard deviation")]
    DegenerateParameter { index: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("min-max range is degenerate (min = max = {0})")]
    DegenerateRange(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("direction {direction_index} is ipsilateral; diffraction grouping covers only contralateral directions")]
    WrongSide { direction_index: usize },

    #[error("group {0} has no training data")]
    DegenerateGroup(String),

    #[error("missing checkpoint for group {group}: {path}")]
    MissingCheckpoint { group: String, path: PathBuf },

    #[error("non-finite value after layer {layer} of {network}")]
    NumericalFault { network: String, layer: usize },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Malformed {
            context: context.into(),
            message: message.into(),
        }
    }
}
