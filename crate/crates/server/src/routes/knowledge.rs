use axum::Json;
use ripple_core::course::KnowledgeView;
use ripple_core::knowledge::{CohortSummary, KnowledgeError};
use ripple_core::CohortSelector;
use serde::Deserialize;

use super::Query;
use crate::auth::Caller;
use crate::error::ApiError;

pub async fn me(caller: Caller) -> Json<KnowledgeView> {
    Json(caller.snapshot.knowledge_view(&caller.user.user_id))
}

#[derive(Debug, Deserialize)]
pub struct CohortQuery {
    pub selector: Option<String>,
}

/// Per-topic distribution of student states; `selector` is `all` or `topNN`.
pub async fn cohort(caller: Caller, Query(q): Query<CohortQuery>) -> Result<Json<Vec<CohortSummary>>, ApiError> {
    let selector = match &q.selector {
        Some(s) => s.parse::<CohortSelector>().map_err(ApiError::bad_request)?,
        None => CohortSelector::AllPeers,
    };
    match caller.snapshot.cohort(selector) {
        Ok(rows) => Ok(Json(rows)),
        Err(KnowledgeError::EmptyCohort) => Ok(Json(Vec::new())),
        Err(e) => Err(ApiError::bad_request(e.to_string())),
    }
}
