//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("raster format error in {path}: {detail}")]
    RasterFormat { path: PathBuf, detail: String },

    #[error("raster shape mismatch: {0}")]
    RasterShape(String),

    #[error("vector data error: {0}")]
    Vector(String),

    #[error("train/test split failed: {0}")]
    Split(String),

    #[error("clustering error: {0}")]
    Cluster(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("model construction error: {0}")]
    Model(String),

    #[error("encoder transfer rejected at `{key}`: {reason}")]
    Transfer { key: String, reason: String },

    #[error("checkpoint error in {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },

    #[error("training error: {0}")]
    Training(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("training device {0:?} is not available in this build")]
    UnsupportedDevice(crate::training::Device),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("scene synthesis error: {0}")]
    Synthetic(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
