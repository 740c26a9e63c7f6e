use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("mapping file {path}, line {line}: {message}")]
    Mapping {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid label id {id} at pixel ({x}, {y})")]
    InvalidLabel { id: u8, x: usize, y: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("non-finite gradient in `{param}` at index {index} (value {value})")]
    NonFiniteGradient {
        param: String,
        index: usize,
        value: f64,
    },

    #[error("non-finite loss {loss} at iteration {iteration}")]
    NonFiniteLoss { loss: f64, iteration: u64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("EMA state is not initialized")]
    EmaUninitialized,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
