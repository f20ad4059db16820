use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    AvailabilityVector, CourseId, KnowledgeUnit, KuId, Question, QuestionId, QuestionPatch, Role, Timestamp, UserId,
    UserRole,
};

/// One immutable record in a course log. The log is the sole source of truth;
/// every other piece of state is a replay of these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at: Timestamp,
    pub course: CourseId,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModerationAction {
    Edit,
    Delete,
    Restore,
}

fn active_default() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    CourseCreated {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        host: Option<String>,
    },
    TopicsDefined {
        topics: Vec<KnowledgeUnit>,
    },
    ConsentTextSet {
        text: String,
    },
    UserJoined {
        user: UserId,
        display_name: String,
        role: UserRole,
    },
    QuestionCreated {
        author: UserId,
        question: Question,
    },
    AnswerSubmitted {
        user: UserId,
        question: QuestionId,
        chosen_index: usize,
        correct: bool,
    },
    DifficultyRated {
        user: UserId,
        question: QuestionId,
        stars: u8,
    },
    QualityRated {
        user: UserId,
        question: QuestionId,
        stars: u8,
    },
    QuestionFlagged {
        user: UserId,
        question: QuestionId,
        reason: String,
    },
    ModerationApplied {
        instructor: UserId,
        question: QuestionId,
        action: ModerationAction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        patch: Option<QuestionPatch>,
    },
    KnowledgeRefreshed {
        instructor: UserId,
    },
    PeerRequestPosted {
        user: UserId,
        ku: KuId,
        role: Role,
        #[serde(default = "active_default")]
        active: bool,
    },
    AvailabilitySet {
        user: UserId,
        slots: AvailabilityVector,
    },
    PreferenceSet {
        user: UserId,
        role: Role,
        epsilon: f64,
    },
    SessionRequested {
        from_user: UserId,
        to_user: UserId,
        slot: usize,
        kus: Vec<KuId>,
        /// Requester's role; the recipient holds its complement.
        role: Role,
    },
    SessionResponded {
        user: UserId,
        session_ref: u64,
        accepted: bool,
    },
    ConsentRecorded {
        user: UserId,
        granted: bool,
    },
    GoalsSet {
        user: UserId,
        goals: BTreeMap<String, u64>,
    },
    /// Marks the user's notifications up to `up_to` as read.
    NotificationsRead {
        user: UserId,
        up_to: Timestamp,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::CourseCreated { .. } => "CourseCreated",
            EventKind::TopicsDefined { .. } => "TopicsDefined",
            EventKind::ConsentTextSet { .. } => "ConsentTextSet",
            EventKind::UserJoined { .. } => "UserJoined",
            EventKind::QuestionCreated { .. } => "QuestionCreated",
            EventKind::AnswerSubmitted { .. } => "AnswerSubmitted",
            EventKind::DifficultyRated { .. } => "DifficultyRated",
            EventKind::QualityRated { .. } => "QualityRated",
            EventKind::QuestionFlagged { .. } => "QuestionFlagged",
            EventKind::ModerationApplied { .. } => "ModerationApplied",
            EventKind::KnowledgeRefreshed { .. } => "KnowledgeRefreshed",
            EventKind::PeerRequestPosted { .. } => "PeerRequestPosted",
            EventKind::AvailabilitySet { .. } => "AvailabilitySet",
            EventKind::PreferenceSet { .. } => "PreferenceSet",
            EventKind::SessionRequested { .. } => "SessionRequested",
            EventKind::SessionResponded { .. } => "SessionResponded",
            EventKind::ConsentRecorded { .. } => "ConsentRecorded",
            EventKind::GoalsSet { .. } => "GoalsSet",
            EventKind::NotificationsRead { .. } => "NotificationsRead",
        }
    }

    /// The acting (or subject) user of the event, if any.
    pub fn user(&self) -> Option<&UserId> {
        match self {
            EventKind::CourseCreated { .. } | EventKind::TopicsDefined { .. } | EventKind::ConsentTextSet { .. } => {
                None
            }
            EventKind::UserJoined { user, .. }
            | EventKind::AnswerSubmitted { user, .. }
            | EventKind::DifficultyRated { user, .. }
            | EventKind::QualityRated { user, .. }
            | EventKind::QuestionFlagged { user, .. }
            | EventKind::PeerRequestPosted { user, .. }
            | EventKind::AvailabilitySet { user, .. }
            | EventKind::PreferenceSet { user, .. }
            | EventKind::SessionResponded { user, .. }
            | EventKind::ConsentRecorded { user, .. }
            | EventKind::GoalsSet { user, .. }
            | EventKind::NotificationsRead { user, .. } => Some(user),
            EventKind::QuestionCreated { author, .. } => Some(author),
            EventKind::ModerationApplied { instructor, .. } | EventKind::KnowledgeRefreshed { instructor } => {
                Some(instructor)
            }
            EventKind::SessionRequested { from_user, .. } => Some(from_user),
        }
    }

    /// The question the event concerns, if any.
    pub fn question(&self) -> Option<QuestionId> {
        match self {
            EventKind::QuestionCreated { question, .. } => Some(question.question_id),
            EventKind::AnswerSubmitted { question, .. }
            | EventKind::DifficultyRated { question, .. }
            | EventKind::QualityRated { question, .. }
            | EventKind::QuestionFlagged { question, .. }
            | EventKind::ModerationApplied { question, .. } => Some(*question),
            _ => None,
        }
    }
}
