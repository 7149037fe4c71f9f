//! Crate-wide error type with a coarse category used for process exit codes.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class; the CLI maps these onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad usage, bad configuration, or mismatched geometry (exit code 1).
    Config,
    /// Unreadable, malformed, or degenerate input data (exit code 2).
    Data,
    /// Numerical failure during computation (exit code 3).
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {got} Hz")]
    SampleRate { expected: u32, got: u32 },

    #[error("signal too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("length mismatch: {a} vs {b} samples")]
    LengthMismatch { a: usize, b: usize },

    #[error("empty input")]
    Empty,

    #[error("degenerate signal: {0}")]
    Degenerate(String),

    #[error("ill-conditioned recursion at lag {lag}")]
    IllConditioned { lag: usize },

    #[error("non-finite {what}: {detail}")]
    NonFinite { what: String, detail: String },

    #[error("silent speech signal: SNR is undefined")]
    SilentSpeech,

    #[error("zero reference signal")]
    ZeroReference,

    #[error("empty corpus split: {0}")]
    EmptySplit(String),

    #[error("wav {path}: {msg}")]
    Wav { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn wav(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Wav { path: path.into(), msg: msg.into() }
    }

    pub fn checkpoint(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Checkpoint { path: path.into(), msg: msg.into() }
    }

    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            Config(_) | Geometry(_) | SampleRate { .. } | LengthMismatch { .. } => {
                ErrorCategory::Config
            }
            TooShort { .. } | Empty | SilentSpeech | EmptySplit(_) | Wav { .. } | Io { .. }
            | Checkpoint { .. } => ErrorCategory::Data,
            Degenerate(_) | IllConditioned { .. } | NonFinite { .. } | ZeroReference => {
                ErrorCategory::Numeric
            }
        }
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            ErrorCategory::Config => 1,
            ErrorCategory::Data => 2,
            ErrorCategory::Numeric => 3,
        }
    }
}
