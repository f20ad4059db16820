use axum::extract::State;
use axum::http::header::{CONTENT_DISPOSITION, CONTENT_TYPE};
use axum::response::IntoResponse;
use axum::Json;
use ripple_core::course::KnowledgeView;
use ripple_core::recommender::{moderate as moderate_question, ModerationRequest};
use ripple_core::{EventKind, Question, QuestionId, QuestionStats, Timestamp};
use serde::{Deserialize, Serialize};

use super::{Body, Path};
use crate::auth::Instructor;
use crate::error::ApiError;
use crate::state::SharedState;

#[derive(Debug, Serialize, Deserialize)]
pub struct FlaggedQuestion {
    pub question: Question,
    pub stats: QuestionStats,
}

pub async fn flagged(Instructor(caller): Instructor) -> Json<Vec<FlaggedQuestion>> {
    let list = caller
        .snapshot
        .flagged()
        .into_iter()
        .map(|(q, stats)| FlaggedQuestion { question: q.clone(), stats })
        .collect();
    Json(list)
}

pub async fn moderate(
    State(state): State<SharedState>,
    Instructor(caller): Instructor,
    Path(id): Path<u64>,
    Body(req): Body<ModerationRequest>,
) -> Result<Json<Question>, ApiError> {
    let id = QuestionId(id);
    let (_, s) = state.append(caller.course(), |s| {
        if let ModerationRequest::Edit { patch } = &req {
            if let Some(t) = patch.tags.iter().flatten().find(|t| !s.topics.iter().any(|k| k.ku_id == **t)) {
                return Err(ApiError::bad_request(format!("unknown topic {t}")));
            }
        }
        Ok(moderate_question(&caller.user, id, s.question(id), req)?)
    })?;
    Ok(Json(s.question(id).expect("moderated question exists").clone()))
}

pub async fn export(
    State(state): State<SharedState>,
    Instructor(caller): Instructor,
) -> Result<impl IntoResponse, ApiError> {
    let csv = state.course(caller.course())?.export_csv();
    let disposition = format!("attachment; filename=\"{}.csv\"", caller.course());
    Ok(([(CONTENT_TYPE, "text/csv; charset=utf-8".to_owned()), (CONTENT_DISPOSITION, disposition)], csv))
}

pub async fn progress(Instructor(caller): Instructor) -> Json<Vec<KnowledgeView>> {
    Json(caller.snapshot.progress())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RefreshResponse {
    pub fitted_at: Option<Timestamp>,
}

/// Refits the knowledge model now instead of waiting for the answer count.
pub async fn refresh(
    State(state): State<SharedState>,
    Instructor(caller): Instructor,
) -> Result<Json<RefreshResponse>, ApiError> {
    let (_, s) = state
        .append(caller.course(), |_| Ok(EventKind::KnowledgeRefreshed { instructor: caller.user.user_id.clone() }))?;
    Ok(Json(RefreshResponse { fitted_at: s.knowledge().map(|k| k.snapshot.at) }))
}
