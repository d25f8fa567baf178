use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for {len} agents")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("unsupported baseline: {0}")]
    UnsupportedBaseline(String),

    #[error("certification mode does not match schedule: {0}")]
    ModeMismatch(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("diagnostic unavailable: {0}")]
    Unavailable(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
