use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("index {index} out of range for size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("measurement count {m} out of range for N = {n} (include_dc = {include_dc})")]
    MeasurementCount { m: usize, n: usize, include_dc: bool },

    #[error("grid {width}x{height} cannot be decomposed over {levels} levels")]
    IndivisibleGrid { width: usize, height: usize, levels: usize },

    #[error("bundle has no transparent-SLM measurement; cannot debias")]
    MissingTransparent,

    #[error("spot center ({x:.3}, {y:.3}) for CCD location ({px:.6}, {py:.6}) lies outside the {width}x{height} grid")]
    OffGrid {
        x: f64,
        y: f64,
        px: f64,
        py: f64,
        width: usize,
        height: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0} has zero norm")]
    ZeroNorm(&'static str),

    #[error("no feature found in spectrum")]
    NoFeature,

    #[error("full sampling (M = N) required, got M = {m}, N = {n}")]
    NotFullSampling { m: usize, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Decode(#[from] DecodeError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("config {}: {message}", path.display())]
    Config { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

/// Failures while decoding one of the binary file formats.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated input: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("invalid field {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}
