use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: expected {expected} values per row, found {found}")]
    RaggedRow {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: invalid numeric token {token:?}")]
    BadToken {
        path: PathBuf,
        line: usize,
        token: String,
    },

    #[error("{path}: file contains no data rows")]
    EmptyFile { path: PathBuf },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,

    #[error("view {view_id}: {n_labels} labels for {n_samples} samples")]
    LabelCountMismatch {
        view_id: String,
        n_labels: usize,
        n_samples: usize,
    },

    #[error("view {view_id}, sample {index}: label {label} outside [1..{class_count}]")]
    LabelOutOfRange {
        view_id: String,
        index: usize,
        label: usize,
        class_count: usize,
    },

    #[error("sample {index}: views disagree on its label ({a} vs {b})")]
    LabelDisagreement { index: usize, a: usize, b: usize },

    #[error("views have differing sample counts ({counts:?})")]
    SampleCountMismatch { counts: Vec<usize> },

    #[error("corpus needs at least two views, got {0}")]
    TooFewViews(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("linear system is numerically singular; increase the ridge parameter")]
    SingularSystem,

    #[error("dictionary has no usable atoms")]
    ZeroDictionary,

    #[error("sparsity {sparsity} exceeds atom count {atoms}")]
    SparsityExceedsAtoms { sparsity: usize, atoms: usize },

    #[error("input matrix is entirely zero")]
    AllZeroInput,

    #[error("domain {0} contains no samples")]
    EmptyDomain(String),

    #[error("objective numerator is identically zero (beta = 0 and mu = 0)")]
    DegenerateObjective,

    #[error("denominator matrix is not positive definite")]
    IndefiniteDenominator,

    #[error("median pairwise distance is zero; supply an explicit bandwidth")]
    ZeroBandwidth,

    #[error("unknown view id {0:?}")]
    UnknownView(String),

    #[error("unknown sweep parameter {name:?}; valid names: {valid}")]
    UnknownParameter { name: String, valid: String },

    #[error("{path}: {message}")]
    BadManifest { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
