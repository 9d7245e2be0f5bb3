use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Unreadable or invalid configuration: exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Failure inside a computation: exit code 3.
    #[error("numerical error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}

impl From<nonrev_core::Error> for Error {
    fn from(e: nonrev_core::Error) -> Self {
        Error::Numeric(e.to_string())
    }
}

impl From<nonrev_mc::Error> for Error {
    fn from(e: nonrev_mc::Error) -> Self {
        Error::Numeric(e.to_string())
    }
}

impl From<nonrev_zigzag::Error> for Error {
    fn from(e: nonrev_zigzag::Error) -> Self {
        Error::Numeric(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
