//! Reciprocal peer matching and the study-session lifecycle.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{AvailabilityVector, EventKind, KuId, Role, Timestamp, UserId, SLOTS_PER_WEEK};

/// Preferred competency gap per role.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetencyPreference {
    pub provide: f64,
    pub seek: f64,
    pub partner: f64,
}

impl Default for CompetencyPreference {
    fn default() -> Self {
        Self { provide: 0.2, seek: 0.2, partner: 0.0 }
    }
}

impl CompetencyPreference {
    pub fn epsilon(&self, role: Role) -> f64 {
        match role {
            Role::ProvideSupport => self.provide,
            Role::SeekSupport => self.seek,
            Role::FindPartner => self.partner,
        }
    }

    pub fn set(&mut self, role: Role, epsilon: f64) {
        match role {
            Role::ProvideSupport => self.provide = epsilon,
            Role::SeekSupport => self.seek = epsilon,
            Role::FindPartner => self.partner = epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    /// Similarity band for partner matches.
    pub tau: f64,
    /// Width of the preference kernel.
    pub kernel_width: f64,
    /// Minimum state for a valid ProvideSupport request (the Blue band).
    pub provide_threshold: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self { tau: 0.15, kernel_width: 0.1, provide_threshold: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error("role pair is not eligible")]
    NotEligible,
    #[error("no common available slot")]
    NoCommonSlot,
    #[error("user has not set their availability")]
    NoAvailabilitySet,
    #[error("unknown user {0}")]
    UnknownUser(UserId),
}

pub fn eligible(my_role: Role, their_role: Role, my_state: f64, their_state: f64, tau: f64) -> bool {
    match (my_role, their_role) {
        (Role::ProvideSupport, Role::SeekSupport) => my_state > their_state,
        (Role::SeekSupport, Role::ProvideSupport) => my_state < their_state,
        (Role::FindPartner, Role::FindPartner) => (my_state - their_state).abs() <= tau,
        _ => false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub count: usize,
    pub normalized: f64,
}

pub fn availability_overlap(z: &AvailabilityVector, other: &AvailabilityVector) -> Overlap {
    let count = z.intersect(other).count();
    let denom = z.count().min(other.count()).max(1);
    Overlap { count, normalized: count as f64 / denom as f64 }
}

/// One side of a match: how well `them` suits `me` on one topic.
pub fn directional_score(
    my_role: Role,
    their_role: Role,
    my_state: f64,
    their_state: f64,
    my_pref: &CompetencyPreference,
    overlap: &Overlap,
    params: &MatchParams,
) -> Result<f64, MatchError> {
    if !eligible(my_role, their_role, my_state, their_state, params.tau) {
        return Err(MatchError::NotEligible);
    }
    if overlap.count == 0 {
        return Err(MatchError::NoCommonSlot);
    }
    let (gap, eps) = match my_role {
        Role::ProvideSupport => (my_state - their_state, my_pref.provide),
        Role::SeekSupport => (their_state - my_state, my_pref.seek),
        Role::FindPartner => ((my_state - their_state).abs(), 0.0),
    };
    let d = gap - eps;
    let fit = (-(d * d) / (2.0 * params.kernel_width * params.kernel_width)).exp();
    Ok(fit * overlap.normalized)
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Everything the matcher needs to know about one user.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeerProfile {
    pub user: UserId,
    pub availability: Option<AvailabilityVector>,
    pub preference: CompetencyPreference,
    /// Active requests.
    pub requests: BTreeSet<(KuId, Role)>,
    /// Knowledge state per topic; missing topics read as 0.5.
    pub states: BTreeMap<KuId, f64>,
}

impl PeerProfile {
    pub fn state(&self, ku: KuId) -> f64 {
        self.states.get(&ku).copied().unwrap_or(0.5)
    }
}

/// Reciprocal score of `a` (in role `ra`) and `b` (in role `rb`) on `ku`.
pub fn reciprocal_score(
    a: &PeerProfile,
    b: &PeerProfile,
    ku: KuId,
    (ra, rb): (Role, Role),
    params: &MatchParams,
) -> Result<f64, MatchError> {
    let (Some(za), Some(zb)) = (&a.availability, &b.availability) else {
        return Err(MatchError::NoCommonSlot);
    };
    let overlap = availability_overlap(za, zb);
    let (sa, sb) = (a.state(ku), b.state(ku));
    let forward = directional_score(ra, rb, sa, sb, &a.preference, &overlap, params)?;
    let backward = directional_score(rb, ra, sb, sa, &b.preference, &overlap, params)?;
    Ok(harmonic_mean(forward, backward))
}

/// The matcher's view of a course.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PeerCohort {
    profiles: BTreeMap<UserId, PeerProfile>,
    pub params: MatchParams,
}

impl PeerCohort {
    /// Drops ProvideSupport requests the user is not yet competent for.
    pub fn new(profiles: impl IntoIterator<Item = PeerProfile>, params: MatchParams) -> Self {
        let profiles = profiles
            .into_iter()
            .map(|mut p| {
                let states = p.states.clone();
                p.requests.retain(|(ku, role)| {
                    *role != Role::ProvideSupport || states.get(ku).copied().unwrap_or(0.5) >= params.provide_threshold
                });
                (p.user.clone(), p)
            })
            .collect();
        Self { profiles, params }
    }

    pub fn profile(&self, user: &UserId) -> Option<&PeerProfile> {
        self.profiles.get(user)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &PeerProfile> {
        self.profiles.values()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeerRecommendation {
    pub other_user: UserId,
    pub score: f64,
    pub matched_kus: Vec<KuId>,
    pub suggested_slot: usize,
    pub direction: (Role, Role),
}

const TIE_EPS: f64 = 1e-9;

/// Best match with one other user, if any.
///
/// The direction reported is that of the first maximiser in (topic, my role)
/// order.
fn best_match(me: &PeerProfile, them: &PeerProfile, params: &MatchParams) -> Option<PeerRecommendation> {
    let common = me.availability?.intersect(&them.availability?);
    let slot = common.first()?;
    let mut scored = Vec::new();
    for &(ku, role) in &me.requests {
        let theirs = role.complement();
        if !them.requests.contains(&(ku, theirs)) {
            continue;
        }
        if let Ok(psi) = reciprocal_score(me, them, ku, (role, theirs), params) {
            scored.push((ku, role, theirs, psi));
        }
    }
    let best = scored.iter().map(|s| s.3).fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<_> = scored.iter().filter(|s| s.3 >= best - TIE_EPS).collect();
    let first = winners.first()?;
    let mut matched_kus: Vec<KuId> = winners.iter().map(|s| s.0).collect();
    matched_kus.dedup();
    Some(PeerRecommendation {
        other_user: them.user.clone(),
        score: best,
        matched_kus,
        suggested_slot: slot,
        direction: (first.1, first.2),
    })
}

/// Top-k peers for `user`, by score descending then user id ascending.
pub fn recommend_peers(cohort: &PeerCohort, user: &UserId, k: usize) -> Result<Vec<PeerRecommendation>, MatchError> {
    let me = cohort.profile(user).ok_or_else(|| MatchError::UnknownUser(user.clone()))?;
    if me.availability.is_none() {
        return Err(MatchError::NoAvailabilitySet);
    }
    let mut out: Vec<PeerRecommendation> =
        cohort.profiles().filter(|p| p.user != *user).filter_map(|them| best_match(me, them, &cohort.params)).collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.other_user.cmp(&b.other_user)));
    out.truncate(k);
    Ok(out)
}

/// Per slot, how many users with an active request are available.
pub fn slot_popularity(cohort: &PeerCohort) -> [u32; SLOTS_PER_WEEK] {
    let mut counts = [0u32; SLOTS_PER_WEEK];
    for p in cohort.profiles().filter(|p| !p.requests.is_empty()) {
        if let Some(z) = &p.availability {
            z.slots().for_each(|s| counts[s] += 1);
        }
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    Pending,
    Accepted,
    Declined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    /// Sequence number of the request event.
    pub session_ref: u64,
    pub from_user: UserId,
    pub to_user: UserId,
    pub slot: usize,
    pub kus: Vec<KuId>,
    /// The requester's role.
    pub role: Role,
    pub requested_at: Timestamp,
    pub status: SessionStatus,
    pub responded_at: Option<Timestamp>,
}

impl Session {
    /// The participant giving support, if the session has one.
    pub fn provider(&self) -> Option<&UserId> {
        match self.role {
            Role::ProvideSupport => Some(&self.from_user),
            Role::SeekSupport => Some(&self.to_user),
            Role::FindPartner => None,
        }
    }

    pub fn involves(&self, user: &UserId) -> bool {
        self.from_user == *user || self.to_user == *user
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("slot {0} is not available to both users")]
    SlotNotCommon(usize),
    #[error("only the recipient may respond to this request")]
    NotRecipient,
    #[error("session already responded to")]
    AlreadyResponded,
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("cannot request a session with yourself")]
    SelfRequest,
    #[error("a session needs at least one topic")]
    NoTopics,
    #[error("unknown user {0}")]
    UnknownUser(UserId),
}

pub fn request_session(
    cohort: &PeerCohort,
    from: &UserId,
    to: &UserId,
    slot: usize,
    kus: Vec<KuId>,
    role: Role,
) -> Result<EventKind, SessionError> {
    if from == to {
        return Err(SessionError::SelfRequest);
    }
    if kus.is_empty() {
        return Err(SessionError::NoTopics);
    }
    let availability =
        |u: &UserId| cohort.profile(u).map(|p| p.availability).ok_or_else(|| SessionError::UnknownUser(u.clone()));
    let (za, zb) = (availability(from)?, availability(to)?);
    let common = matches!((za, zb), (Some(a), Some(b)) if slot < SLOTS_PER_WEEK && a.get(slot) && b.get(slot));
    if !common {
        return Err(SessionError::SlotNotCommon(slot));
    }
    Ok(EventKind::SessionRequested { from_user: from.clone(), to_user: to.clone(), slot, kus, role })
}

pub fn respond_session(
    session_ref: u64,
    session: Option<&Session>,
    user: &UserId,
    accept: bool,
) -> Result<EventKind, SessionError> {
    let s = session.ok_or(SessionError::UnknownSession(session_ref))?;
    if s.to_user != *user {
        return Err(SessionError::NotRecipient);
    }
    if s.status != SessionStatus::Pending {
        return Err(SessionError::AlreadyResponded);
    }
    Ok(EventKind::SessionResponded { user: user.clone(), session_ref, accepted: accept })
}
