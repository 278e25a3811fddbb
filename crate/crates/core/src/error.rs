use thiserror::Error;

/// Errors raised by the laboratory.
///
/// The variants map onto the CLI exit codes: input and configuration
/// problems are usage errors, `NumericFailure` is a numerical breakdown,
/// and `Inconsistency` flags a violated hard inequality.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification of a [`LabError`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    NumericFailure,
    Inconsistency,
    Io,
}

impl LabError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Self::DimensionMismatch { .. } | Self::InvalidInput(_) | Self::Config(_) => {
                ErrorKind::Usage
            }
            Self::NumericFailure(_) => ErrorKind::NumericFailure,
            Self::Inconsistency(_) => ErrorKind::Inconsistency,
            Self::Io(_) => ErrorKind::Io,
            Self::Json(e) if e.is_io() => ErrorKind::Io,
            Self::Json(_) => ErrorKind::Usage,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn ensure_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(LabError::DimensionMismatch { expected, found })
    }
}
