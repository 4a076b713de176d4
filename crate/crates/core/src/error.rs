use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sensing matrix of {rows}x{cols} entries exceeds the cap of {cap} entries")]
    MatrixTooLarge { rows: usize, cols: usize, cap: usize },

    #[error("power iteration did not converge within {iterations} iterations (last relative change {last_change:e})")]
    NonConvergence { iterations: usize, last_change: f64 },

    #[error("waveform basis is empty")]
    EmptyBasis,

    #[error("{0} has zero norm")]
    ZeroNorm(&'static str),

    #[error("contrast undefined: background variance is zero")]
    UndefinedContrast,

    #[error("contrast undefined: {0} region of the mask is empty")]
    EmptyMaskRegion(&'static str),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("finite-difference check unstable: boundary margin {margin:e} is below the required {required:e}")]
    UnstableCheck { margin: f64, required: f64 },

    #[error("gradient check failed: {failed} of {total} cases above tolerance (worst relative error {worst:e})")]
    GradientCheckFailed { failed: usize, total: usize, worst: f64 },

    #[error("non-finite gradient for sample {sample}")]
    NonFiniteGradient { sample: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("training failed at epoch {epoch}: {source}")]
    Training {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed CMPX header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("truncated CMPX payload in {path}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("unsupported CMPX version {found} in {path} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for numerical failures (as opposed to configuration or I/O problems).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. }
            | Error::ZeroNorm(_)
            | Error::UndefinedContrast
            | Error::EmptyMaskRegion(_)
            | Error::Unsupported(_)
            | Error::UnstableCheck { .. }
            | Error::GradientCheckFailed { .. }
            | Error::NonFiniteGradient { .. } => true,
            Error::Training { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
