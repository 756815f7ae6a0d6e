use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("job queue is full ({capacity} jobs)")]
    QueueFull { capacity: usize },
    #[error("validation failed: {0}")]
    ValidationFailed(itsgw_core::Error),
    #[error("job `{0}` not found")]
    NotFound(String),
    #[error("job log line {line} is corrupt: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("cannot fuse: {0}")]
    NotFusable(String),
    #[error("gateway is shutting down")]
    ShuttingDown,
    #[error(transparent)]
    Core(#[from] itsgw_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::QueueFull { .. } => "QueueFull",
            ServiceError::ValidationFailed(_) => "ValidationFailed",
            ServiceError::NotFound(_) => "NotFound",
            ServiceError::CorruptLog { .. } => "CorruptLog",
            ServiceError::NotFusable(_) => "NotFusable",
            ServiceError::ShuttingDown => "ShuttingDown",
            ServiceError::Core(e) => e.code(),
            ServiceError::Io(_) => "Io",
        }
    }
}
