use thiserror::Error;

pub type Result<T> = std::result::Result<T, ArtError>;

#[derive(Debug, Error)]
pub enum ArtError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid predicate: {0}")]
    InvalidPredicate(String),

    #[error("cannot bisect dimension {dim}: interval has zero width")]
    ZeroWidth { dim: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ArtError {
    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        ArtError::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}
