use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),

    #[error("bad request: {0}")]
    BadRequest(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("corrupt session log: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Core(#[from] pairalign::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ServiceError {
    /// HTTP status class of the error.
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::NotFound(_) => 404,
            ServiceError::BadRequest(_) => 400,
            ServiceError::Conflict(_) => 409,
            ServiceError::Core(pairalign::Error::InvalidArgument(_) | pairalign::Error::Unsupported(_)) => 400,
            ServiceError::Core(pairalign::Error::Protocol(_)) => 409,
            _ => 500,
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
