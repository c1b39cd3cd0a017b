use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty attention window")]
    EmptyWindow,

    #[error("state error: {0}")]
    State(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("structure has no ATOM records{0}")]
    EmptyStructure(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} values, found {found}")]
    Length { expected: usize, found: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("index {index} out of bounds (length {len})")]
    Bounds { index: usize, len: usize },

    #[error("data linkage error: {0}")]
    Linkage(String),

    #[error("correlation undefined: {0}")]
    Undefined(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("unsupported artifact version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied data rather than a bug or environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::State(_))
    }
}
