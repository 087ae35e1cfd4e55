use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("value {value} outside [-{limit}, {limit}]")]
    Range { value: f64, limit: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("episode finished; call reset before stepping again")]
    EpisodeFinished,

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("frozen model was modified: digest {before} became {after}")]
    FrozenModelViolation { before: String, after: String },

    #[error("modality unavailable: {0}")]
    ModalityUnavailable(String),

    #[error("zero-shot evaluation performed {0} parameter updates")]
    PurityViolation(u64),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}
