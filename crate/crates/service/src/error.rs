use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("unknown task set {0:?}")]
    UnknownTaskSet(String),
    #[error("session is closed")]
    Closed,
    #[error("session is busy with another request")]
    Busy,
    #[error("questionnaire already submitted")]
    AlreadySubmitted,
    #[error("{0}")]
    Invalid(String),
    #[error("storage error: {0}")]
    Storage(String),
    #[error(transparent)]
    Core(#[from] asu_core::AsuError),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::UnknownModel(_) => "unknown_model",
            ServiceError::UnknownTaskSet(_) => "unknown_task_set",
            ServiceError::Closed => "session_closed",
            ServiceError::Busy => "busy",
            ServiceError::AlreadySubmitted => "already_submitted",
            ServiceError::Invalid(_) => "invalid_request",
            ServiceError::Storage(_) => "storage",
            ServiceError::Core(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::UnknownModel(_) | ServiceError::UnknownTaskSet(_) => StatusCode::BAD_REQUEST,
            ServiceError::Closed | ServiceError::Busy | ServiceError::AlreadySubmitted => StatusCode::CONFLICT,
            ServiceError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Storage(_) | ServiceError::Core(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.code(), "message": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}
