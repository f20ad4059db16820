use std::collections::BTreeMap;

use axum::extract::State;
use axum::Json;
use ripple_core::course::EngagementView;
use ripple_core::gamification::{Badge, LeaderboardRow, Metric, Notification};
use ripple_core::{EventKind, Timestamp};
use serde::{Deserialize, Serialize};

use super::{Body, Query};
use crate::auth::Caller;
use crate::error::ApiError;
use crate::state::SharedState;

#[derive(Debug, Deserialize)]
pub struct LeaderboardQuery {
    pub metric: Option<String>,
    pub top_n: Option<usize>,
}

pub async fn leaderboard(
    caller: Caller,
    Query(q): Query<LeaderboardQuery>,
) -> Result<Json<Vec<LeaderboardRow>>, ApiError> {
    let metric = match &q.metric {
        Some(m) => m.parse::<Metric>().map_err(ApiError::bad_request)?,
        None => Metric::Answered,
    };
    let top_n = q.top_n.unwrap_or(10);
    if top_n == 0 {
        return Err(ApiError::bad_request("top_n must be at least 1"));
    }
    Ok(Json(caller.snapshot.leaderboard(metric, top_n)))
}

pub async fn badges(caller: Caller) -> Json<Vec<Badge>> {
    Json(caller.snapshot.badges(&caller.user.user_id))
}

pub async fn notifications(State(state): State<SharedState>, caller: Caller) -> Json<Vec<Notification>> {
    Json(caller.snapshot.notifications(&caller.user.user_id, state.now()))
}

#[derive(Debug, Default, Deserialize)]
pub struct ReadRequest {
    pub up_to: Option<Timestamp>,
}

/// Marks notifications up to `up_to` (default: now) as read.
pub async fn mark_read(
    State(state): State<SharedState>,
    caller: Caller,
    Body(req): Body<ReadRequest>,
) -> Result<Json<Vec<Notification>>, ApiError> {
    let now = state.now();
    let up_to = req.up_to.unwrap_or(now);
    let (_, s) = state
        .append(caller.course(), |_| Ok(EventKind::NotificationsRead { user: caller.user.user_id.clone(), up_to }))?;
    Ok(Json(s.notifications(&caller.user.user_id, now)))
}

pub async fn engagement(caller: Caller) -> Json<EngagementView> {
    Json(caller.snapshot.engagement(&caller.user.user_id))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GoalsRequest {
    /// Target per metric name.
    pub goals: BTreeMap<String, u64>,
}

pub async fn set_goals(
    State(state): State<SharedState>,
    caller: Caller,
    Body(req): Body<GoalsRequest>,
) -> Result<Json<EngagementView>, ApiError> {
    let goals = req
        .goals
        .iter()
        .map(|(k, v)| Ok((format!("{:?}", k.parse::<Metric>().map_err(ApiError::bad_request)?), *v)))
        .collect::<Result<BTreeMap<_, _>, ApiError>>()?;
    let (_, s) =
        state.append(caller.course(), |_| Ok(EventKind::GoalsSet { user: caller.user.user_id.clone(), goals }))?;
    Ok(Json(s.engagement(&caller.user.user_id)))
}
