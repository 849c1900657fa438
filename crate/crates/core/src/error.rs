use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported dtype code 0x{0:02x}")]
    UnsupportedDtype(u8),

    #[error("unsupported ndim {0}, expected 3")]
    UnsupportedRank(u8),

    #[error("truncated payload: need {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("{found} trailing bytes after payload")]
    TrailingBytes { found: usize },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("layer mismatch: {0}")]
    LayerMismatch(String),

    #[error("missing layer file {0}")]
    MissingLayer(PathBuf),

    #[error("duplicate layer {0:?}")]
    DuplicateLayer(String),

    #[error("id mismatch: {0}")]
    IdMismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable, machine-parseable category used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::BadMagic { .. }
            | Error::UnsupportedDtype(_)
            | Error::UnsupportedRank(_)
            | Error::Truncated { .. }
            | Error::TrailingBytes { .. }
            | Error::Shape(_) => "format",
            Error::NonFinite { .. } => "non-finite",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::LayerMismatch(_) | Error::DuplicateLayer(_) => "layer-mismatch",
            Error::MissingLayer(_) => "missing-layer",
            Error::IdMismatch(_) => "id-mismatch",
            Error::Empty(_) => "empty-input",
            Error::Degenerate(_) => "degenerate-data",
            Error::Parse(_) => "parse",
            Error::Config(_) => "config",
        }
    }
}
