use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A value lies outside the domain of a function (log of a non-positive
    /// number, zero variance, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error(transparent)]
    Load(#[from] LoadError),

    #[error("training error: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures while reading a CSV table. Rows are 1-based data rows (the header
/// is row 0); columns are 0-based and include the timestamp column.
#[derive(Debug, Error, PartialEq)]
pub enum LoadError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("could not read {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },

    #[error("header row missing or has no value columns")]
    MissingHeader,

    #[error("column `{0}` named in schema is not present in the header")]
    UnknownColumn(String),

    #[error("schema assigns no target column")]
    NoTargets,

    #[error("row {row}: missing timestamp")]
    MissingTimestamp { row: usize },

    #[error("row {row}: unparseable timestamp `{value}`")]
    BadTimestamp { row: usize, value: String },

    #[error("row {row}, column {col}: empty cell")]
    EmptyCell { row: usize, col: usize },

    #[error("row {row}, column {col}: cannot parse `{value}` as a number")]
    Unparseable { row: usize, col: usize, value: String },

    #[error("row {row}, column {col}: NaN or infinite value")]
    NonFinite { row: usize, col: usize },

    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: timestamp spacing is irregular or not increasing")]
    IrregularSpacing { row: usize },

    #[error("table has fewer than two rows")]
    TooShort,
}
