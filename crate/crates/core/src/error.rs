use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("cannot normalize a zero vector")]
    ZeroNorm,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label {label} out of range for {label_count} classes")]
    LabelOutOfRange { label: usize, label_count: usize },

    #[error("forward cache does not belong to these parameters and sentences")]
    StaleCache,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
