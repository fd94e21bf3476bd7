use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the scaling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}: expected {expected} fields, found {found}")]
    MalformedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {column}: {value:?} is not an integer code")]
    NonIntegerCode {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column {column}: {value:?} is not a valid weight")]
    InvalidWeight {
        row: usize,
        column: String,
        value: String,
    },

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("duplicate column {0:?}")]
    DuplicateColumn(String),

    #[error("item {item}, row {row}: raw code {code} is not covered by the coding scheme")]
    UnmappedCode { item: String, row: usize, code: i64 },

    #[error("invalid coding scheme for item {item}: {reason}")]
    InvalidScheme { item: String, reason: String },

    #[error("no persons left after excluding all-missing respondents")]
    EmptyResult,

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("invalid parameters for item {item}: {reason}")]
    InvalidParams { item: String, reason: String },

    #[error("item {item}: category index {category} outside 0..{n_categories}")]
    CategoryOutOfRange {
        item: String,
        category: usize,
        n_categories: usize,
    },

    #[error("item {item}: response code {code} is not part of the parameter layout")]
    CodeNotInLayout { item: String, code: i64 },

    #[error("item {item} is degenerate: {reason}")]
    DegenerateItem { item: String, reason: String },

    #[error("model mismatch: expected {expected}, found {found}")]
    ModelMismatch { expected: String, found: String },

    #[error("category layout checksum mismatch: file says {stored}, computed {computed}")]
    LayoutChecksum { stored: String, computed: String },

    #[error("model sets differ: {0}")]
    ModelSetMismatch(String),

    #[error("parameter alignment failed: {0}")]
    Alignment(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn params(item: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParams {
            item: item.into(),
            reason: reason.into(),
        }
    }
}
