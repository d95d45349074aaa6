use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use sensorlab_core::{DomainError, ReportError, StorageError};
use serde::Serialize;

/// An HTTP failure. The body is `{"error": code, "message": ..., "fields": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub fields: Vec<String>,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    fields: &'a [String],
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into(), fields: vec![] }
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing, unknown or expired session token")
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn invalid(field: &str, message: impl Into<String>) -> Self {
        ApiError { fields: vec![field.to_string()], ..Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message) }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<DomainError> for ApiError {
    fn from(e: DomainError) -> Self {
        let message = e.to_string();
        match e {
            DomainError::Forbidden(_) => Self::forbidden(message),
            DomainError::NotFound(_) => Self::not_found(message),
            // The code existed once; 410 lets a client tell "ask your teacher
            // for the new code" apart from a typo.
            DomainError::ExpiredCode => Self::new(StatusCode::GONE, "expired_code", message),
            DomainError::SlotLimit => Self::new(StatusCode::CONFLICT, "slot_limit", message),
            DomainError::State(_) => Self::new(StatusCode::CONFLICT, "state", message),
            DomainError::Conflict(_) => Self::new(StatusCode::CONFLICT, "conflict", message),
            DomainError::Validation(fields) => {
                ApiError { fields, ..Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message) }
            }
            DomainError::Integrity(_) | DomainError::Storage(_) => Self::internal(message),
        }
    }
}

impl From<StorageError> for ApiError {
    fn from(e: StorageError) -> Self {
        Self::internal(e.to_string())
    }
}

impl From<ReportError> for ApiError {
    fn from(e: ReportError) -> Self {
        Self::internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}: {}", self.code, self.message);
        }
        let body = Body { error: self.code, message: &self.message, fields: &self.fields };
        (self.status, Json(body)).into_response()
    }
}
