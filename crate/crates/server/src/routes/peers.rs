use std::collections::BTreeSet;

use axum::extract::State;
use axum::http::StatusCode;
use axum::Json;
use ripple_core::peers::{
    request_session as session_request, respond_session, slot_popularity as popularity, CompetencyPreference,
};
use ripple_core::{
    recommend_peers, AvailabilityVector, Band, CourseState, EventKind, KuId, PeerRecommendation, Role, Session, UserId,
};
use serde::{Deserialize, Serialize};

use super::{Body, Path, Query};
use crate::auth::Caller;
use crate::error::ApiError;
use crate::state::SharedState;

fn known_ku(s: &CourseState, ku: KuId) -> Result<(), ApiError> {
    if s.topics.iter().any(|t| t.ku_id == ku) {
        Ok(())
    } else {
        Err(ApiError::not_found(format!("unknown topic {ku}")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Availability {
    pub slots: AvailabilityVector,
}

pub async fn availability(caller: Caller) -> Json<Option<Availability>> {
    Json(caller.snapshot.availability(&caller.user.user_id).map(|slots| Availability { slots }))
}

pub async fn set_availability(
    State(state): State<SharedState>,
    caller: Caller,
    Body(req): Body<Availability>,
) -> Result<Json<Availability>, ApiError> {
    state.append(caller.course(), |_| {
        Ok(EventKind::AvailabilitySet { user: caller.user.user_id.clone(), slots: req.slots })
    })?;
    Ok(Json(req))
}

pub async fn preferences(caller: Caller) -> Json<CompetencyPreference> {
    Json(caller.snapshot.preference(&caller.user.user_id))
}

#[derive(Debug, Deserialize)]
pub struct PreferenceRequest {
    pub role: Role,
    pub epsilon: f64,
}

pub async fn set_preference(
    State(state): State<SharedState>,
    caller: Caller,
    Body(req): Body<PreferenceRequest>,
) -> Result<Json<CompetencyPreference>, ApiError> {
    if !(0.0..=1.0).contains(&req.epsilon) {
        return Err(ApiError::bad_request("epsilon must lie in [0, 1]"));
    }
    let (_, s) = state.append(caller.course(), |_| {
        Ok(EventKind::PreferenceSet { user: caller.user.user_id.clone(), role: req.role, epsilon: req.epsilon })
    })?;
    Ok(Json(s.preference(&caller.user.user_id)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PeerRequestView {
    pub ku: KuId,
    pub role: Role,
}

fn request_views(s: &CourseState, user: &UserId) -> Vec<PeerRequestView> {
    s.active_requests(user).into_iter().map(|(ku, role)| PeerRequestView { ku, role }).collect()
}

pub async fn requests(caller: Caller) -> Json<Vec<PeerRequestView>> {
    Json(request_views(&caller.snapshot, &caller.user.user_id))
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
pub struct PeerRequestBody {
    pub ku: KuId,
    pub role: Role,
    #[serde(default = "default_true")]
    pub active: bool,
}

/// Posts or withdraws a request. Offering support needs the Blue band on
/// that topic.
pub async fn post_request(
    State(state): State<SharedState>,
    caller: Caller,
    Body(req): Body<PeerRequestBody>,
) -> Result<Json<Vec<PeerRequestView>>, ApiError> {
    let user = caller.user.user_id.clone();
    let (_, s) = state.append(caller.course(), |s| {
        known_ku(s, req.ku)?;
        if req.active && req.role == Role::ProvideSupport && s.band_of(&user, req.ku) != Band::Blue {
            return Err(ApiError::conflict(
                "competency_required",
                format!("offering support on topic {} requires the Blue band", req.ku),
            ));
        }
        Ok(EventKind::PeerRequestPosted { user: user.clone(), ku: req.ku, role: req.role, active: req.active })
    })?;
    Ok(Json(request_views(&s, &user)))
}

#[derive(Debug, Deserialize)]
pub struct RecommendationQuery {
    pub k: Option<usize>,
}

pub async fn recommendations(
    caller: Caller,
    Query(q): Query<RecommendationQuery>,
) -> Result<Json<Vec<PeerRecommendation>>, ApiError> {
    let k = q.k.unwrap_or(5);
    if k == 0 {
        return Err(ApiError::bad_request("k must be at least 1"));
    }
    Ok(Json(recommend_peers(&caller.snapshot.peer_cohort(), &caller.user.user_id, k)?))
}

pub async fn slot_popularity(caller: Caller) -> Json<Vec<u32>> {
    Json(popularity(&caller.snapshot.peer_cohort()).to_vec())
}

#[derive(Debug, Deserialize)]
pub struct SessionRequestBody {
    pub to_user: UserId,
    pub slot: usize,
    pub kus: Vec<KuId>,
    pub role: Role,
}

pub async fn request_session(
    State(state): State<SharedState>,
    caller: Caller,
    Body(req): Body<SessionRequestBody>,
) -> Result<(StatusCode, Json<Session>), ApiError> {
    let (event, s) = state.append(caller.course(), |s| {
        let kus: Vec<KuId> = req.kus.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        kus.iter().try_for_each(|k| known_ku(s, *k))?;
        Ok(session_request(&s.peer_cohort(), &caller.user.user_id, &req.to_user, req.slot, kus, req.role)?)
    })?;
    Ok((StatusCode::CREATED, Json(s.session(event.seq).expect("session just requested").clone())))
}

pub async fn sessions(caller: Caller) -> Json<Vec<Session>> {
    Json(caller.snapshot.sessions_of(&caller.user.user_id).cloned().collect())
}

#[derive(Debug, Deserialize)]
pub struct RespondBody {
    pub accept: bool,
}

pub async fn respond(
    State(state): State<SharedState>,
    caller: Caller,
    Path(id): Path<u64>,
    Body(req): Body<RespondBody>,
) -> Result<Json<Session>, ApiError> {
    let (_, s) =
        state.append(caller.course(), |s| Ok(respond_session(id, s.session(id), &caller.user.user_id, req.accept)?))?;
    Ok(Json(s.session(id).expect("responded session exists").clone()))
}
