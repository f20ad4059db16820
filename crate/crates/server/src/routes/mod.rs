use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts, Request};
use axum::http::request::Parts;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;

use crate::error::ApiError;
use crate::state::SharedState;

mod courses;
mod instructor;
mod knowledge;
mod peers;
mod profile;
mod questions;
mod users;

/// JSON request body whose rejections use the JSON error shape.
pub struct Body<T>(pub T);

impl<T: DeserializeOwned> FromRequest<SharedState> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &SharedState) -> Result<Self, Self::Rejection> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| Body(v))
            .map_err(|e: JsonRejection| ApiError::bad_request(e.body_text()))
    }
}

pub struct Query<T>(pub T);

impl<T: DeserializeOwned> FromRequestParts<SharedState> for Query<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &SharedState) -> Result<Self, Self::Rejection> {
        axum::extract::Query::<T>::from_request_parts(parts, state)
            .await
            .map(|axum::extract::Query(v)| Query(v))
            .map_err(|e: QueryRejection| ApiError::bad_request(e.body_text()))
    }
}

pub struct Path<T>(pub T);

impl<T: DeserializeOwned + Send> FromRequestParts<SharedState> for Path<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &SharedState) -> Result<Self, Self::Rejection> {
        axum::extract::Path::<T>::from_request_parts(parts, state)
            .await
            .map(|axum::extract::Path(v)| Path(v))
            .map_err(|e: PathRejection| ApiError::not_found(e.body_text()))
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/users/login", post(users::login))
        .route("/users/me", get(users::me))
        .route("/users/me/consent", put(users::consent))
        .route("/courses/{id}/topics", get(courses::topics).put(courses::set_topics))
        .route("/courses/{id}/consent-text", get(courses::consent_text).put(courses::set_consent_text))
        .route("/questions", post(questions::create).get(questions::list))
        .route("/questions/{id}", get(questions::detail))
        .route("/questions/{id}/answer", post(questions::answer))
        .route("/questions/{id}/rate", post(questions::rate))
        .route("/questions/{id}/flag", post(questions::flag))
        .route("/instructor/flagged", get(instructor::flagged))
        .route("/instructor/questions/{id}/moderate", post(instructor::moderate))
        .route("/instructor/export.csv", get(instructor::export))
        .route("/instructor/progress", get(instructor::progress))
        .route("/instructor/refresh", post(instructor::refresh))
        .route("/knowledge/me", get(knowledge::me))
        .route("/knowledge/cohort", get(knowledge::cohort))
        .route("/peers/availability", get(peers::availability).put(peers::set_availability))
        .route("/peers/preferences", get(peers::preferences).put(peers::set_preference))
        .route("/peers/requests", get(peers::requests).post(peers::post_request))
        .route("/peers/recommendations", get(peers::recommendations))
        .route("/peers/slot-popularity", get(peers::slot_popularity))
        .route("/peers/sessions", get(peers::sessions).post(peers::request_session))
        .route("/peers/sessions/{id}/respond", post(peers::respond))
        .route("/leaderboard", get(profile::leaderboard))
        .route("/profile/badges", get(profile::badges))
        .route("/profile/notifications", get(profile::notifications))
        .route("/profile/notifications/read", post(profile::mark_read))
        .route("/profile/engagement", get(profile::engagement).put(profile::set_goals))
        .fallback(fallback)
        .with_state(state)
}
