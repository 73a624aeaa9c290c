use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes, groups, widths or other hyperparameters.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid audio: {0}")]
    Audio(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error(
        "checkpoint {path}: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})"
    )]
    Checksum {
        path: PathBuf,
        stored: u32,
        computed: u32,
    },

    #[error("checkpoint config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr:.6})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
