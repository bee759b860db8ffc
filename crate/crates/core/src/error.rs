use std::path::PathBuf;

/// Errors produced anywhere in the discovery pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// A residual (or other per-point quantity) became non-finite.
    #[error("non-finite value at index {index}: {what}")]
    NonFinite { index: usize, what: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("spectral resolution insufficient: tail energy fraction {tail:.3e} exceeds {limit:.1e}")]
    Resolution { tail: f64, limit: f64 },

    #[error("training diverged at step {step}: {what}")]
    TrainingDiverged { step: usize, what: String },

    #[error("model selection failed: every validation loss is infinite")]
    SelectionFailed,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
