use std::collections::HashSet;

use axum::extract::State;
use axum::Json;
use ripple_core::{CourseId, EventKind, KnowledgeUnit, KuId};
use serde::{Deserialize, Serialize};

use super::{Body, Path};
use crate::auth::{Caller, Instructor};
use crate::error::ApiError;
use crate::state::SharedState;

pub async fn topics(caller: Caller, Path(id): Path<CourseId>) -> Result<Json<Vec<KnowledgeUnit>>, ApiError> {
    caller.require_course(&id)?;
    Ok(Json(caller.snapshot.topics.clone()))
}

#[derive(Debug, Deserialize)]
pub struct TopicInput {
    pub ku_id: Option<KuId>,
    pub label: String,
    pub ordinal: Option<u32>,
}

#[derive(Debug, Deserialize)]
pub struct TopicsRequest {
    pub topics: Vec<TopicInput>,
}

/// Replaces the topic list. Entries without an id get fresh ids; omitted
/// topics are removed, which fails while questions are tagged with them.
pub async fn set_topics(
    State(state): State<SharedState>,
    Instructor(caller): Instructor,
    Path(id): Path<CourseId>,
    Body(req): Body<TopicsRequest>,
) -> Result<Json<Vec<KnowledgeUnit>>, ApiError> {
    caller.require_course(&id)?;
    let (_, s) = state.append(&id, |s| {
        let mut labels = HashSet::new();
        let mut ids = HashSet::new();
        for t in &req.topics {
            let label = t.label.trim();
            if label.is_empty() {
                return Err(ApiError::bad_request("topic label is empty"));
            }
            if !labels.insert(label.to_owned()) {
                return Err(ApiError::bad_request(format!("duplicate topic label {label:?}")));
            }
            if let Some(k) = t.ku_id {
                if !ids.insert(k) {
                    return Err(ApiError::bad_request(format!("duplicate topic id {k}")));
                }
            }
        }
        let mut next = s.topics.iter().map(|t| t.ku_id.0).chain(ids.iter().map(|k| k.0)).max().unwrap_or(0) + 1;
        let topics = req
            .topics
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let ku_id = t.ku_id.unwrap_or_else(|| {
                    next += 1;
                    KuId(next - 1)
                });
                KnowledgeUnit { ku_id, label: t.label.trim().to_owned(), ordinal: t.ordinal.unwrap_or(i as u32) }
            })
            .collect();
        Ok(EventKind::TopicsDefined { topics })
    })?;
    Ok(Json(s.topics.clone()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConsentText {
    pub text: String,
}

/// Readable by every member so students can see what they consent to.
pub async fn consent_text(caller: Caller, Path(id): Path<CourseId>) -> Result<Json<ConsentText>, ApiError> {
    caller.require_course(&id)?;
    Ok(Json(ConsentText { text: caller.snapshot.consent_text.clone() }))
}

pub async fn set_consent_text(
    State(state): State<SharedState>,
    Instructor(caller): Instructor,
    Path(id): Path<CourseId>,
    Body(req): Body<ConsentText>,
) -> Result<Json<ConsentText>, ApiError> {
    caller.require_course(&id)?;
    let (_, s) = state.append(&id, |_| Ok(EventKind::ConsentTextSet { text: req.text.clone() }))?;
    Ok(Json(ConsentText { text: s.consent_text.clone() }))
}
