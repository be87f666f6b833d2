use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the diagnostics library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("feature index {index} out of range for {width} features")]
    FeatureOutOfRange { index: usize, width: usize },

    #[error("row index {index} out of range for {rows} rows")]
    RowOutOfRange { index: usize, rows: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: model expects {expected} features, input has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("permutation is not a bijection on 0..{0}")]
    NotABijection(usize),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("no conditional law available for feature {0}")]
    UnsupportedConditional(usize),

    #[error("mixed measures in rank aggregation: {0} vs {1}")]
    MixedMeasures(String, String),

    #[error("schema mismatch: missing columns {0:?}")]
    SchemaMismatch(Vec<String>),

    #[error("non-numeric cell at line {line}, column {column}: {value:?}")]
    NonNumeric {
        line: usize,
        column: String,
        value: String,
    },

    #[error("rows with count < 1 (lines {0:?})")]
    NonPositiveCount(Vec<usize>),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("model file: {0}")]
    ModelFormat(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
