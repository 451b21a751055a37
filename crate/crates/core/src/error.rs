use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },

    #[error("row {row}: repeated header line")]
    DuplicateHeader { row: usize },

    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnCount {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    BadNumber {
        row: usize,
        column: &'static str,
        value: String,
    },

    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },

    #[error("malformed CSV")]
    Csv(#[from] csv::Error),

    #[error("no data to fit")]
    EmptyGallery,

    #[error("cannot fit k={k} clusters to {n} records")]
    InvalidK { k: usize, n: usize },

    #[error("zero vector has no defined {0}")]
    ZeroVector(&'static str),

    #[error("serial time is zero; reduction undefined")]
    ZeroDuration,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need at least {needed} points on the curve, got {found}")]
    CurveTooShort { needed: usize, found: usize },

    #[error("silhouette needs at least 2 non-empty clusters, found {0}")]
    TooFewClusters(usize),

    #[error("cluster label {label} out of range for k={k}")]
    LabelOutOfRange { label: usize, k: usize },

    #[error("{}: checksum mismatch (expected {expected}, found {found})", path.display())]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{}: partition index is incomplete (interrupted write)", .0.display())]
    IncompleteIndex(PathBuf),

    #[error("{}: malformed manifest: {message}", path.display())]
    Manifest { path: PathBuf, message: String },

    #[error("query {index} failed")]
    Query {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
