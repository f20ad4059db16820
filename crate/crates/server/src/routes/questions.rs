use std::collections::BTreeSet;

use axum::extract::State;
use axum::http::StatusCode;
use axum::Json;
use ripple_core::event_log::Attempt;
use ripple_core::recommender::{flag_question, AnswerFilter, PersonalizedScore, SortKey};
use ripple_core::{
    validate_question, CourseState, EventKind, KuId, QueryOptions, Question, QuestionCard, QuestionDraft, QuestionId,
    QuestionStats, QuestionStatus, Timestamp, User, UserId, UserRole,
};
use serde::{Deserialize, Serialize};

use super::{Body, Path, Query};
use crate::auth::Caller;
use crate::error::ApiError;
use crate::state::SharedState;

/// A question as shown to one caller. Students see the answer key only once
/// they have attempted the question or if they wrote it.
#[derive(Debug, Serialize, Deserialize)]
pub struct QuestionView {
    pub question_id: QuestionId,
    pub author_id: UserId,
    pub body: String,
    pub choices: Vec<String>,
    pub tags: BTreeSet<KuId>,
    pub status: QuestionStatus,
    pub created_at: Timestamp,
    pub correct_index: Option<usize>,
    pub solution: Option<String>,
    pub stats: QuestionStats,
    pub last_attempt: Option<Attempt>,
    pub personalized: Option<PersonalizedScore>,
}

fn view(s: &CourseState, caller: &User, q: &Question) -> QuestionView {
    let detail = s.question_detail(&caller.user_id, q.question_id).expect("question exists");
    let reveal = caller.role == UserRole::Instructor || q.author_id == caller.user_id || detail.last_attempt.is_some();
    QuestionView {
        question_id: q.question_id,
        author_id: q.author_id.clone(),
        body: q.body.clone(),
        choices: q.choices.clone(),
        tags: q.tags.clone(),
        status: q.status,
        created_at: q.created_at,
        correct_index: reveal.then_some(q.correct_index),
        solution: reveal.then(|| q.solution.clone()),
        stats: detail.stats,
        last_attempt: detail.last_attempt,
        personalized: detail.personalized,
    }
}

fn visible<'a>(s: &'a CourseState, caller: &User, id: QuestionId) -> Result<&'a Question, ApiError> {
    match s.question(id) {
        Some(q) if q.status != QuestionStatus::Deleted || caller.role == UserRole::Instructor => Ok(q),
        _ => Err(ApiError::not_found(format!("unknown question {id}"))),
    }
}

pub async fn create(
    State(state): State<SharedState>,
    caller: Caller,
    Body(draft): Body<QuestionDraft>,
) -> Result<(StatusCode, Json<QuestionView>), ApiError> {
    let now = state.now();
    let (event, s) = state.append(caller.course(), |s| {
        if let Some(t) = draft.tags.iter().find(|t| !s.topics.iter().any(|k| k.ku_id == **t)) {
            return Err(ApiError::bad_request(format!("unknown topic {t}")));
        }
        let question = validate_question(draft, s.next_question_id(), caller.user.user_id.clone(), now)?;
        Ok(EventKind::QuestionCreated { author: caller.user.user_id.clone(), question })
    })?;
    let id = event.kind.question().expect("creation names its question");
    let q = s.question(id).expect("just created");
    Ok((StatusCode::CREATED, Json(view(&s, &caller.user, q))))
}

#[derive(Debug, Default, Deserialize)]
pub struct ListQuery {
    pub sort: Option<String>,
    pub filter: Option<String>,
    pub search: Option<String>,
    pub limit: Option<usize>,
}

impl ListQuery {
    pub fn options(&self) -> Result<QueryOptions, ApiError> {
        let mut o = QueryOptions::default();
        if let Some(s) = &self.sort {
            o.sort = s.parse::<SortKey>().map_err(ApiError::bad_request)?;
        }
        if let Some(f) = &self.filter {
            o.filter = f.parse::<AnswerFilter>().map_err(ApiError::bad_request)?;
        }
        o.search = self.search.clone().filter(|s| !s.trim().is_empty());
        if let Some(l) = self.limit {
            if l == 0 {
                return Err(ApiError::bad_request("limit must be at least 1"));
            }
            o.limit = l;
        }
        Ok(o)
    }
}

pub async fn list(caller: Caller, Query(q): Query<ListQuery>) -> Result<Json<Vec<QuestionCard>>, ApiError> {
    Ok(Json(caller.snapshot.recommend(&caller.user.user_id, &q.options()?)))
}

pub async fn detail(caller: Caller, Path(id): Path<u64>) -> Result<Json<QuestionView>, ApiError> {
    let q = visible(&caller.snapshot, &caller.user, QuestionId(id))?;
    Ok(Json(view(&caller.snapshot, &caller.user, q)))
}

#[derive(Debug, Deserialize)]
pub struct AnswerRequest {
    pub chosen_index: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerFeedback {
    pub correct: bool,
    pub correct_index: usize,
    pub solution: String,
    /// Answers per choice, this one included.
    pub peer_distribution: Vec<u64>,
    pub stats: QuestionStats,
}

/// Correctness is decided here; anything the client claims is ignored.
pub async fn answer(
    State(state): State<SharedState>,
    caller: Caller,
    Path(id): Path<u64>,
    Body(req): Body<AnswerRequest>,
) -> Result<Json<AnswerFeedback>, ApiError> {
    let id = QuestionId(id);
    let (_, s) = state.append(caller.course(), |s| {
        let q = visible(s, &caller.user, id)?;
        if q.status != QuestionStatus::Active {
            return Err(ApiError::conflict("question_unavailable", format!("question {id} is not active")));
        }
        if req.chosen_index >= q.choices.len() {
            return Err(ApiError::bad_request(format!("choice {} does not exist", req.chosen_index)));
        }
        Ok(EventKind::AnswerSubmitted {
            user: caller.user.user_id.clone(),
            question: id,
            chosen_index: req.chosen_index,
            correct: req.chosen_index == q.correct_index,
        })
    })?;
    let q = s.question(id).expect("answered question exists");
    let stats = s.stats(id);
    Ok(Json(AnswerFeedback {
        correct: req.chosen_index == q.correct_index,
        correct_index: q.correct_index,
        solution: q.solution.clone(),
        peer_distribution: stats.choice_counts.clone(),
        stats,
    }))
}

#[derive(Debug, Deserialize)]
pub struct RateRequest {
    pub difficulty: Option<u8>,
    pub quality: Option<u8>,
}

/// One rating per call: exactly one of `difficulty` and `quality`.
pub async fn rate(
    State(state): State<SharedState>,
    caller: Caller,
    Path(id): Path<u64>,
    Body(req): Body<RateRequest>,
) -> Result<Json<QuestionStats>, ApiError> {
    let id = QuestionId(id);
    let user = caller.user.user_id.clone();
    let (_, s) = state.append(caller.course(), |s| {
        visible(s, &caller.user, id)?;
        let (stars, kind): (u8, fn(UserId, QuestionId, u8) -> EventKind) = match (req.difficulty, req.quality) {
            (Some(d), None) => (d, |user, question, stars| EventKind::DifficultyRated { user, question, stars }),
            (None, Some(q)) => (q, |user, question, stars| EventKind::QualityRated { user, question, stars }),
            _ => return Err(ApiError::bad_request("give exactly one of difficulty and quality")),
        };
        if !(1..=5).contains(&stars) {
            return Err(ApiError::bad_request("ratings are 1 to 5 stars"));
        }
        Ok(kind(user, id, stars))
    })?;
    Ok(Json(s.stats(id)))
}

#[derive(Debug, Deserialize)]
pub struct FlagRequest {
    #[serde(default)]
    pub reason: String,
}

pub async fn flag(
    State(state): State<SharedState>,
    caller: Caller,
    Path(id): Path<u64>,
    Body(req): Body<FlagRequest>,
) -> Result<Json<QuestionView>, ApiError> {
    let id = QuestionId(id);
    let (_, s) = state.append(caller.course(), |s| {
        Ok(flag_question(&caller.user.user_id, id, visible(s, &caller.user, id).ok(), &req.reason)?)
    })?;
    Ok(Json(view(&s, &caller.user, s.question(id).expect("flagged question exists"))))
}
