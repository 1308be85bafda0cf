use thiserror::Error;

use crate::models::ModelKind;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: expected 3 tab-separated fields, got {fields}")]
    MalformedLine {
        path: String,
        line: usize,
        fields: usize,
    },

    #[error("{path}:{line}: duplicate triple within split")]
    DuplicateTriple { path: String, line: usize },

    #[error("unknown label `{label}` not present in vocabulary")]
    UnknownLabel { label: String },

    #[error("{path}:{line}: relation type `{got}` is not one of R, S, C")]
    BadTaxonomyLabel {
        path: String,
        line: usize,
        got: String,
    },

    #[error("combined dataset has {got} triples, need at least {need} to resplit")]
    ResplitTooSmall { got: usize, need: usize },

    #[error("id {id} out of range (size {size})")]
    IndexOutOfRange { id: usize, size: usize },

    #[error("operation requires model kind {expected:?}, got {got:?}")]
    WrongModelKind { expected: ModelKind, got: ModelKind },

    #[error("model kind {0:?} has no relation translation vector")]
    NoTranslationVector(ModelKind),

    #[error("model kind {0:?} has no diagonal relation matrix")]
    NoDiagonalMatrix(ModelKind),

    #[error("vector length mismatch: {left} vs {right}")]
    ShapeMismatch { left: usize, right: usize },

    #[error("symmetry score undefined: off-diagonal entries have zero variance")]
    ZeroOffDiagonalVariance,

    #[error("eigen profile undefined: all diagonal entries are zero")]
    DegenerateProfile,

    #[error("non-finite gradient in block {block}, row {row}")]
    NonFiniteGradient { block: &'static str, row: usize },

    #[error("training aborted at epoch {epoch}, batch {batch}: {reason}")]
    TrainingAborted {
        epoch: usize,
        batch: usize,
        reason: String,
    },

    #[error("checkpoint {path}: bad magic (not a kgrel checkpoint)")]
    BadMagic { path: String },

    #[error("checkpoint {path}: unsupported format version {version}")]
    UnsupportedVersion { path: String, version: u32 },

    #[error("checkpoint {path}: truncated or corrupt while reading {what}")]
    TruncatedCheckpoint { path: String, what: String },

    #[error("checkpoint {path}: tensor `{name}` shape {shape:?} disagrees with payload")]
    ShapeInconsistency {
        path: String,
        name: String,
        shape: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl KgError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        KgError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, KgError>;
