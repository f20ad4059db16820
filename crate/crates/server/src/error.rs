use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ripple_core::peers::{MatchError, SessionError};
use ripple_core::recommender::ModerationError;
use ripple_core::{LogError, ValidationErrors};
use serde::{Deserialize, Serialize};

/// Error body returned by every endpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid token")
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: self.code.to_owned(), message: self.message };
        (self.status, Json(body)).into_response()
    }
}

impl From<ValidationErrors> for ApiError {
    fn from(e: ValidationErrors) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "validation_failed", e.to_string())
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        match e {
            LogError::UnknownReference(_) | LogError::InconsistentAnswer(_) => {
                Self::new(StatusCode::CONFLICT, "conflict", e.to_string())
            }
            LogError::Duplicate(_) | LogError::CourseExists(_) => {
                Self::new(StatusCode::CONFLICT, "duplicate", e.to_string())
            }
            LogError::UnknownCourse(_) => Self::not_found(e.to_string()),
            LogError::StorageFailure(_) | LogError::Corrupt { .. } => Self::internal(e.to_string()),
        }
    }
}

impl From<ModerationError> for ApiError {
    fn from(e: ModerationError) -> Self {
        match e {
            ModerationError::UnknownQuestion(_) => Self::not_found(e.to_string()),
            ModerationError::AlreadyDeleted(_) => Self::conflict("question_deleted", e.to_string()),
            ModerationError::Forbidden => Self::forbidden(e.to_string()),
            ModerationError::Invalid(v) => v.into(),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::SlotNotCommon(_) => Self::conflict("slot_not_common", e.to_string()),
            SessionError::NotRecipient => Self::forbidden(e.to_string()),
            SessionError::AlreadyResponded => Self::conflict("already_responded", e.to_string()),
            SessionError::UnknownSession(_) | SessionError::UnknownUser(_) => Self::not_found(e.to_string()),
            SessionError::SelfRequest | SessionError::NoTopics => Self::bad_request(e.to_string()),
        }
    }
}

impl From<MatchError> for ApiError {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::NoAvailabilitySet => Self::conflict("no_availability", e.to_string()),
            MatchError::UnknownUser(_) => Self::not_found(e.to_string()),
            MatchError::NotEligible | MatchError::NoCommonSlot => Self::conflict("not_eligible", e.to_string()),
        }
    }
}
