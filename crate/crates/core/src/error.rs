use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Precondition(String),
    #[error("unknown layer '{0}'")]
    UnknownLayer(String),
    #[error("malformed container: {0}")]
    Format(String),
    #[error("training diverged after epoch {epoch}; last finite loss {last_finite_loss}")]
    Diverged { epoch: usize, last_finite_loss: f64 },
    #[error("cannot place {count} disjoint {height}x{width} patches in a {image_height}x{image_width} image")]
    Placement {
        count: usize,
        height: usize,
        width: usize,
        image_height: usize,
        image_width: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
