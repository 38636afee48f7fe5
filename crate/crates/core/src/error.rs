use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported primitive `{0}`")]
    UnsupportedPrimitive(String),

    #[error("non-finite loss {loss} at iteration {iteration}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("loss trend violated at iteration {iteration}: window mean {window_mean} vs best {best}")]
    LossTrend {
        iteration: usize,
        window_mean: f64,
        best: f64,
    },

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("MRC: bad map stamp in {path}")]
    MrcBadStamp { path: PathBuf },

    #[error("MRC: unsupported mode {mode} in {path}")]
    MrcUnsupportedMode { path: PathBuf, mode: i32 },

    #[error("MRC: invalid dimensions {dims:?} in {path}")]
    MrcBadDimensions { path: PathBuf, dims: [i32; 3] },

    #[error("MRC: truncated payload in {path}: expected {expected} bytes, found {actual}")]
    MrcTruncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Broad failure class, used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => ErrorKind::Config,
            Error::Io { .. }
            | Error::MrcBadStamp { .. }
            | Error::MrcUnsupportedMode { .. }
            | Error::MrcBadDimensions { .. }
            | Error::MrcTruncated { .. }
            | Error::Format { .. } => ErrorKind::Io,
            Error::ShapeMismatch { .. }
            | Error::UnsupportedPrimitive(_)
            | Error::Divergence { .. }
            | Error::LossTrend { .. }
            | Error::OutOfRange { .. } => ErrorKind::Numerics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Numerics,
}
