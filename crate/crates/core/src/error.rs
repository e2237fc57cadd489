use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("exact mode unavailable: {0}")]
    ExactModeUnavailable(String),
    #[error("resource cap exceeded: {what} needs more than {limit}")]
    ResourceCap { what: String, limit: usize },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn verify(msg: impl Into<String>) -> Self {
        Error::Verification(msg.into())
    }

    pub fn cap(what: impl Into<String>, limit: usize) -> Self {
        Error::ResourceCap { what: what.into(), limit }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Verification(_) => 2,
            Error::ResourceCap { .. } => 4,
            _ => 3,
        }
    }
}
