//! Leaderboards, badges and notifications.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::domain::{Timestamp, UserId};
use crate::peers::{Session, SessionStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    Contributed,
    Answered,
    CorrectlyAnswered,
    Rated,
    Achievements,
}

impl Metric {
    pub const ALL: [Metric; 5] =
        [Metric::Contributed, Metric::Answered, Metric::CorrectlyAnswered, Metric::Rated, Metric::Achievements];
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| format!("{m:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

/// Per-user counters, maintained by the course reducer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserActivity {
    pub created: u64,
    pub answered: u64,
    pub correct: u64,
    /// Distinct questions rated (difficulty or quality).
    pub rated: u64,
    /// Accepted sessions in which the user is the provider.
    pub provider_sessions: u64,
}

impl UserActivity {
    pub fn metric(&self, metric: Metric, achievements: u64) -> u64 {
        match metric {
            Metric::Contributed => self.created,
            Metric::Answered => self.answered,
            Metric::CorrectlyAnswered => self.correct,
            Metric::Rated => self.rated,
            Metric::Achievements => achievements,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub user: UserId,
    pub value: u64,
    pub rank: usize,
}

/// Standard competition ranking: descending value, ties share a rank and
/// are listed by ascending user id.
pub fn leaderboard(values: impl IntoIterator<Item = (UserId, u64)>, top_n: usize) -> Vec<LeaderboardRow> {
    let mut values: Vec<_> = values.into_iter().collect();
    values.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut rows: Vec<LeaderboardRow> = Vec::with_capacity(values.len());
    for (i, (user, value)) in values.into_iter().enumerate() {
        let rank = match rows.last() {
            Some(prev) if prev.value == value => prev.rank,
            _ => i + 1,
        };
        rows.push(LeaderboardRow { user, value, rank });
    }
    rows.truncate(top_n.max(1));
    rows
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BadgeFamily {
    Engagement,
    Competency,
    PeerSupport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    Bronze,
    Silver,
    Gold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BadgeTrack {
    Created,
    Answered,
    ProviderSessions,
    /// At least one Blue topic.
    AnyBlue,
    /// Every topic Yellow or Blue.
    AllYellow,
    /// Every topic Blue.
    AllBlue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BadgeSpec {
    pub id: &'static str,
    pub family: BadgeFamily,
    pub tier: Tier,
    pub track: BadgeTrack,
    pub threshold: u64,
    pub criterion: &'static str,
}

const fn spec(
    id: &'static str,
    family: BadgeFamily,
    tier: Tier,
    track: BadgeTrack,
    threshold: u64,
    criterion: &'static str,
) -> BadgeSpec {
    BadgeSpec { id, family, tier, track, threshold, criterion }
}

use BadgeFamily::*;
use BadgeTrack::*;
use Tier::*;

pub const BADGES: [BadgeSpec; 12] = [
    spec("create-bronze", Engagement, Bronze, Created, 1, "Create 1 question"),
    spec("create-silver", Engagement, Silver, Created, 10, "Create 10 questions"),
    spec("create-gold", Engagement, Gold, Created, 50, "Create 50 questions"),
    spec("answer-bronze", Engagement, Bronze, Answered, 10, "Answer 10 questions"),
    spec("answer-silver", Engagement, Silver, Answered, 100, "Answer 100 questions"),
    spec("answer-gold", Engagement, Gold, Answered, 500, "Answer 500 questions"),
    spec("competency-bronze", Competency, Bronze, AnyBlue, 1, "Reach Blue on any topic"),
    spec("competency-silver", Competency, Silver, AllYellow, 1, "Reach Yellow or better on every topic"),
    spec("competency-gold", Competency, Gold, AllBlue, 1, "Reach Blue on every topic"),
    spec("support-bronze", PeerSupport, Bronze, ProviderSessions, 1, "Provide support in 1 accepted session"),
    spec("support-silver", PeerSupport, Silver, ProviderSessions, 5, "Provide support in 5 accepted sessions"),
    spec("support-gold", PeerSupport, Gold, ProviderSessions, 20, "Provide support in 20 accepted sessions"),
];

pub fn badge_spec(id: &str) -> Option<&'static BadgeSpec> {
    BADGES.iter().find(|b| b.id == id)
}

/// How many topics a user holds in each band.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompetencyCounts {
    pub topics: u64,
    pub yellow_or_better: u64,
    pub blue: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub current: u64,
    pub target: u64,
}

impl Progress {
    pub fn done(&self) -> bool {
        self.current >= self.target
    }
}

impl BadgeSpec {
    pub fn progress(&self, activity: &UserActivity, competency: &CompetencyCounts) -> Progress {
        let count = |current| Progress { current, target: self.threshold };
        match self.track {
            Created => count(activity.created),
            Answered => count(activity.answered),
            ProviderSessions => count(activity.provider_sessions),
            AnyBlue => count(competency.blue.min(1)),
            AllYellow => Progress { current: competency.yellow_or_better, target: competency.topics.max(1) },
            AllBlue => Progress { current: competency.blue, target: competency.topics.max(1) },
        }
    }
}

/// Badges whose criterion now holds and that `already_earned` rejects.
pub fn award_badges(
    activity: &UserActivity,
    competency: &CompetencyCounts,
    already_earned: impl Fn(&str) -> bool,
) -> Vec<&'static BadgeSpec> {
    BADGES.iter().filter(|b| !already_earned(b.id)).filter(|b| b.progress(activity, competency).done()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Badge {
    pub badge_id: String,
    pub family: BadgeFamily,
    pub tier: Tier,
    pub criterion: String,
    pub earned_at: Option<Timestamp>,
    pub progress: Progress,
}

impl Badge {
    pub fn new(spec: &BadgeSpec, earned_at: Option<Timestamp>, progress: Progress) -> Self {
        Self {
            badge_id: spec.id.to_owned(),
            family: spec.family,
            tier: spec.tier,
            criterion: spec.criterion.to_owned(),
            earned_at,
            progress,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NotificationKind {
    BadgeEarned,
    SessionUpcoming,
    SessionResponded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub user: UserId,
    pub kind: NotificationKind,
    pub payload: serde_json::Value,
    pub at: Timestamp,
    pub read: bool,
}

/// Start of the first weekly occurrence of an accepted session's slot.
pub fn session_start(session: &Session) -> Option<Timestamp> {
    match (session.status, session.responded_at) {
        (SessionStatus::Accepted, Some(at)) => Some(at.next_occurrence(session.slot)),
        _ => None,
    }
}

/// All notifications for `user`, newest first.
///
/// `earned` lists the user's badges with their earn times; notifications at
/// or before `read_up_to` are marked read.
pub fn notifications<'a>(
    user: &UserId,
    earned: impl IntoIterator<Item = (&'a BadgeSpec, Timestamp)>,
    sessions: impl IntoIterator<Item = &'a Session>,
    now: Timestamp,
    read_up_to: Option<Timestamp>,
) -> Vec<Notification> {
    let mut out = Vec::new();
    let mut push = |kind, payload, at: Timestamp| {
        let read = read_up_to.is_some_and(|r| at <= r);
        out.push(Notification { user: user.clone(), kind, payload, at, read });
    };
    for (spec, at) in earned {
        push(
            NotificationKind::BadgeEarned,
            json!({ "badge_id": spec.id, "family": spec.family, "tier": spec.tier }),
            at,
        );
    }
    for s in sessions.into_iter().filter(|s| s.involves(user)) {
        if let (true, Some(at)) = (s.from_user == *user, s.responded_at) {
            push(
                NotificationKind::SessionResponded,
                json!({ "session_ref": s.session_ref, "by": s.to_user, "accepted": s.status == SessionStatus::Accepted }),
                at,
            );
        }
        if let Some(start) = session_start(s) {
            if start > now && start.0 <= now.0 + Timestamp::MS_PER_WEEK {
                let other = if s.from_user == *user { &s.to_user } else { &s.from_user };
                // Dated from when the session entered the seven-day window.
                let since =
                    Timestamp(start.0.saturating_sub(Timestamp::MS_PER_WEEK)).max(s.responded_at.unwrap_or(start));
                push(
                    NotificationKind::SessionUpcoming,
                    json!({ "session_ref": s.session_ref, "with": other, "slot": s.slot, "kus": s.kus, "starts_at": start }),
                    since,
                );
            }
        }
    }
    out.sort_by_key(|n| std::cmp::Reverse(n.at));
    out
}
