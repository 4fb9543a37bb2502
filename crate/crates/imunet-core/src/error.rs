//! Crate-wide error type.
//!
//! Variants carry the offending values so messages name the exact dimension,
//! field, or file that failed. The CLI maps these onto process exit codes:
//! usage (1), data/format (2), numeric (3).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("channel mismatch: input has {input} channels, kernel expects {expected}")]
    ChannelMismatch { input: usize, expected: usize },

    #[error("length {len} is not divisible by pool width {k}")]
    PoolIndivisible { len: usize, k: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label {0} is outside {{0, 1}}")]
    BadLabel(i64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("window length {window_len} requires at least pool_k^4 = {min} samples")]
    WindowTooShort { window_len: usize, min: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("sample rate {rate_hz} Hz is not an integer multiple of target {target_hz} Hz")]
    RateIndivisible { rate_hz: f64, target_hz: f64 },

    #[error("timestamp regression: sample at {t_s} s arrived after {last_s} s")]
    TimeRegression { t_s: f64, last_s: f64 },

    #[error("checkpoint error in field `{field}`: {reason}")]
    Checkpoint { field: String, reason: String },

    #[error("data format error in {path}: {reason}")]
    DataFormat { path: String, reason: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::DataFormat {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
