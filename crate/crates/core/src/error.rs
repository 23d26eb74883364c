use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("record {index}: {message}")]
    Record { index: usize, message: String },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("unknown value {value:?} for attribute {attribute}")]
    UnknownAttributeValue { attribute: String, value: String },

    #[error("unknown attribute key {0:?}")]
    UnknownKey(String),

    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),

    #[error("template {0:?} must contain exactly one <adjective> placeholder")]
    BadTemplate(String),

    #[error("bad magic bytes in embedding file")]
    BadMagic,

    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("{0} trailing bytes after embedding payload")]
    TrailingBytes(usize),

    #[error("non-finite values in rows {0:?}")]
    NonFinite(Vec<usize>),

    #[error("id {0:?} is not valid UTF-8")]
    InvalidId(usize),

    #[error("id of {0} bytes does not fit a u16 length prefix")]
    IdTooLong(usize),

    #[error("zero vector at row {0} cannot be normalized")]
    ZeroVector(usize),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("missing embedding for prompt {0:?}")]
    MissingPrompt(String),

    #[error("unknown image id {0:?}")]
    UnknownImage(String),

    #[error("embedding ids are not aligned with the manifest: {0}")]
    Misaligned(String),

    #[error("empty sample: {0}")]
    EmptySample(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(&'static str),

    #[error("degenerate spread of similarities for text item {0}")]
    DegenerateSpread(usize),

    #[error("groups must have equal size: {0} vs {1}")]
    UnequalGroups(usize, usize),

    #[error("no valid pair for attribute {attribute}: {constraint}")]
    NoValidPair {
        attribute: String,
        constraint: String,
    },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("image error: {0}")]
    Image(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn from_json(err: &serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
