use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or precondition violation. CLI exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Malformed, inconsistent, or missing data. CLI exit code 3.
    #[error("data error: {0}")]
    Data(String),
    /// Numerical divergence (non-finite values during training). CLI exit code 4.
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io(_) | Error::Json(_) => 3,
            Error::Divergence(_) => 4,
        }
    }
}
