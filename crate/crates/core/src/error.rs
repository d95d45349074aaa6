use thiserror::Error;

/// Failure reported by a storage backend behind [`crate::Repository`].
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("storage: {0}")]
pub struct StorageError(pub String);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("not allowed: {0}")]
    Forbidden(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("join code has been revoked")]
    ExpiredCode,
    #[error("an inquiry holds at most 3 data points")]
    SlotLimit,
    #[error("invalid state: {0}")]
    State(String),
    #[error("validation failed: {}", .0.join(", "))]
    Validation(Vec<String>),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

impl DomainError {
    pub fn validation(field: impl Into<String>) -> Self {
        DomainError::Validation(vec![field.into()])
    }
}
