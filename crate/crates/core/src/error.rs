use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    /// Dimension or configuration fault attributed to one layer of a network.
    #[error("layer {index} ({kind}): {message}")]
    Layer {
        index: usize,
        kind: &'static str,
        message: String,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("non-finite gradient in layer {layer}, parameter {param}")]
    NonFinite { layer: usize, param: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("registry mismatch: {0}")]
    RegistryMismatch(String),

    #[error(transparent)]
    ModelFile(#[from] crate::io::model_file::ModelFileError),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn layer(index: usize, kind: &'static str, message: impl Into<String>) -> Self {
        Error::Layer {
            index,
            kind,
            message: message.into(),
        }
    }
}
