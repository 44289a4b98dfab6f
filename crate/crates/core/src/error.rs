//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector collapsed below the normalization guard (norm < 1e-12).
    #[error("degenerate vector in {context}: norm {norm:e} is below 1e-12")]
    DegenerateVector { context: &'static str, norm: f64 },

    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("manifest error in {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("shape error in {path}: expected {expected} bytes, found {found}")]
    FileShape {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("label error: {0}")]
    Label(String),

    #[error("non-finite feature: instance {index}, {modality} component {component}")]
    NonFiniteFeature {
        index: usize,
        modality: &'static str,
        component: usize,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("category {category} has no training instances")]
    EmptyCategory { category: usize },

    #[error("unknown category {category}: centroid table holds {known} categories")]
    UnknownCategory { category: usize, known: usize },

    /// Triplet construction produced an anchor/negative pair from one category.
    #[error("anchor and negative both belong to category {category}")]
    SameCategory { category: usize },

    #[error("missing projection for instance {id} ({modality})")]
    MissingProjection { id: usize, modality: &'static str },

    #[error("non-finite gradient in {tensor}")]
    NonFiniteGradient { tensor: &'static str },

    #[error("training diverged at epoch {epoch}: {message}")]
    DivergenceDetected { epoch: usize, message: String },

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn manifest(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Manifest {
            path: path.into(),
            message: message.into(),
        }
    }
}
