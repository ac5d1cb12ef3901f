use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BosError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("kernel {kernel_w}x{kernel_h} does not fit in a {map_w}x{map_h} map")]
    KernelTooLarge {
        kernel_w: usize,
        kernel_h: usize,
        map_w: usize,
        map_h: usize,
    },

    #[error("potential {0} outside [-0.5, 0.5]")]
    PotentialOutOfRange(f64),

    #[error("{path}:{line}: {msg}")]
    Config {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid neuron selector `{0}`")]
    Selector(String),

    #[error("malformed graymap {path:?}: {msg}")]
    Graymap { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BosError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(BosError::Domain(msg.into()))
}
