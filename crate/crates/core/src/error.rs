//! Crate-wide error type and the error-class taxonomy used for exit codes.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error class, mapped to process exit codes by the CLI
/// (usage = 2, data = 3, numeric = 4, format = 5).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
    Format,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
            ErrorClass::Format => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::Usage => "usage",
            ErrorClass::Data => "data",
            ErrorClass::Numeric => "numeric",
            ErrorClass::Format => "format",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("unknown label {0}")]
    UnknownLabel(String),

    #[error("duplicate tweet id {0}")]
    DuplicateId(String),

    #[error("duplicate embedding id {0}")]
    DuplicateEmbeddingId(String),

    #[error("embedding dimension mismatch: expected {expected}, found {found} (entry {entry})")]
    EmbeddingDimension {
        expected: usize,
        found: usize,
        entry: String,
    },

    #[error("tweet id {0} not present in imported embeddings")]
    MissingEmbedding(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("missing priority annotation on tweet {0}")]
    MissingPriority(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },

    #[error("graph fingerprint mismatch: checkpoint {expected:016x}, supplied graph {found:016x}")]
    FingerprintMismatch { expected: u64, found: u64 },

    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("corrupt file {path}: {message}")]
    CorruptFile { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// Machine-parseable class of the error, printed as `error[<class>]` by the CLI.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Usage(_) | Error::InvalidParameter(_) => ErrorClass::Usage,
            Error::NonFiniteLoss { .. } => ErrorClass::Numeric,
            Error::UnsupportedVersion { .. } | Error::CorruptFile { .. } => ErrorClass::Format,
            _ => ErrorClass::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
