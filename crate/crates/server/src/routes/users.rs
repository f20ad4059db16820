use axum::extract::State;
use axum::Json;
use ripple_core::{Consent, CourseId, EventKind, User, UserId, UserRole};
use serde::{Deserialize, Serialize};

use super::Body;
use crate::auth::Caller;
use crate::error::ApiError;
use crate::state::SharedState;

#[derive(Debug, Deserialize)]
pub struct LoginRequest {
    pub course: CourseId,
    pub user_id: Option<UserId>,
    pub display_name: Option<String>,
    pub role: Option<UserRole>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub user: User,
    pub course: CourseId,
}

/// Known users log in as themselves. In unauthenticated mode unknown ids
/// (or a missing id, which gets a random one) join the course first.
pub async fn login(
    State(state): State<SharedState>,
    Body(req): Body<LoginRequest>,
) -> Result<Json<LoginResponse>, ApiError> {
    let user_id = match req.user_id {
        Some(id) if id.as_str().trim().is_empty() => return Err(ApiError::bad_request("user_id is empty")),
        Some(id) => id,
        None if state.config.allow_unauthenticated => UserId::new(format!("guest-{}", state.random_hex(4))),
        None => return Err(ApiError::bad_request("user_id is required")),
    };
    let allow = state.config.allow_unauthenticated;
    let (_, snapshot) = state.write(&req.course, |s| {
        if s.user(&user_id).is_some() {
            return Ok(None);
        }
        if !allow {
            return Err(ApiError::unauthorized());
        }
        Ok(Some(EventKind::UserJoined {
            user: user_id.clone(),
            display_name: req.display_name.clone().unwrap_or_else(|| user_id.to_string()),
            role: req.role.unwrap_or(UserRole::Student),
        }))
    })?;
    let user = snapshot.user(&user_id).cloned().ok_or_else(|| ApiError::internal("login did not register the user"))?;
    let token = state.issue_token(&req.course, &user_id);
    Ok(Json(LoginResponse { token: token.token, user, course: req.course }))
}

pub async fn me(caller: Caller) -> Json<User> {
    Json(caller.user)
}

#[derive(Debug, Deserialize)]
pub struct ConsentRequest {
    pub granted: bool,
}

pub async fn consent(
    State(state): State<SharedState>,
    caller: Caller,
    Body(req): Body<ConsentRequest>,
) -> Result<Json<Option<Consent>>, ApiError> {
    let (_, s) = state.append(caller.course(), |_| {
        Ok(EventKind::ConsentRecorded { user: caller.user.user_id.clone(), granted: req.granted })
    })?;
    Ok(Json(s.user(&caller.user.user_id).and_then(|u| u.consent)))
}
