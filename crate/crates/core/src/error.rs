use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cannot normalize a zero-norm vector")]
    DegenerateVector,

    #[error("empty input")]
    EmptyInput,

    #[error("memory holds no clusters")]
    NoClusters,

    #[error("cluster id {id} out of range (K = {k})")]
    ClusterOutOfRange { id: usize, k: usize },

    #[error("unknown instance id {0}")]
    UnknownInstance(usize),

    #[error("need at least {p} clusters per batch, labeling has {k}")]
    TooFewClusters { k: usize, p: usize },

    #[error("epoch {epoch}: clustering produced {k} clusters, need at least {needed}")]
    TrainingAborted { epoch: usize, k: usize, needed: usize },

    #[error("identity {identity} has no cross-camera gallery match")]
    NoCrossCameraRelevants { identity: usize },

    #[error("no query has a relevant gallery item ({skipped} skipped)")]
    NoValidQueries { skipped: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}
