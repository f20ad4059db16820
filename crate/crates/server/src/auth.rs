use std::sync::Arc;

use axum::extract::FromRequestParts;
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use ripple_core::{CourseId, CourseState, User, UserRole};

use crate::error::ApiError;
use crate::state::{SessionToken, SharedState};

/// The authenticated caller with the course snapshot current at request time.
pub struct Caller {
    pub token: SessionToken,
    pub user: User,
    pub snapshot: Arc<CourseState>,
}

impl Caller {
    pub fn course(&self) -> &CourseId {
        &self.token.course_id
    }

    pub fn require_instructor(&self) -> Result<(), ApiError> {
        if self.user.role == UserRole::Instructor {
            Ok(())
        } else {
            Err(ApiError::forbidden("instructor role required"))
        }
    }

    pub fn require_course(&self, id: &CourseId) -> Result<(), ApiError> {
        if self.course() == id {
            Ok(())
        } else {
            Err(ApiError::forbidden(format!("token is not valid for course {id}")))
        }
    }
}

fn bearer(parts: &Parts) -> Option<&str> {
    let value = parts.headers.get(AUTHORIZATION)?.to_str().ok()?;
    let token = value.strip_prefix("Bearer ").or_else(|| value.strip_prefix("bearer "))?;
    Some(token.trim())
}

impl FromRequestParts<SharedState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &SharedState) -> Result<Self, Self::Rejection> {
        let token = bearer(parts).and_then(|t| state.resolve_token(t)).ok_or_else(ApiError::unauthorized)?;
        let snapshot = state.course(&token.course_id)?.snapshot();
        let user = snapshot.user(&token.user_id).cloned().ok_or_else(ApiError::unauthorized)?;
        Ok(Self { token, user, snapshot })
    }
}

/// A caller holding the Instructor role; Students get 403.
pub struct Instructor(pub Caller);

impl FromRequestParts<SharedState> for Instructor {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &SharedState) -> Result<Self, Self::Rejection> {
        let caller = Caller::from_request_parts(parts, state).await?;
        caller.require_instructor()?;
        Ok(Self(caller))
    }
}
