//! Value types shared by every part of the engine.
//!
//! Everything in here is an immutable value; operations are pure functions.

mod availability;
mod event;
mod question;
mod stats;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use availability::{AvailabilityVector, SLOTS_PER_WEEK};
pub use event::{Event, EventKind, ModerationAction};
pub use question::{
    strip_markup, tag_weights, validate_question, Question, QuestionDraft, QuestionPatch, QuestionStatus, UnknownTag,
    ValidationError, ValidationErrors, MAX_CHOICES, MAX_TAGS, MIN_CHOICES,
};
pub use stats::{aggregate_stats, QuestionStats};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// Opaque user identifier, unique within a course.
    UserId
);
string_id!(
    /// Opaque course identifier (the course code).
    CourseId
);

/// Question identifier. Assigned densely from 1 in creation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuestionId(pub u64);

impl fmt::Display for QuestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Knowledge unit (topic) identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KuId(pub u32);

impl fmt::Display for KuId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Milliseconds since the Unix epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const MS_PER_HOUR: u64 = 3_600_000;
    pub const MS_PER_DAY: u64 = 24 * Self::MS_PER_HOUR;
    pub const MS_PER_WEEK: u64 = 7 * Self::MS_PER_DAY;

    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn now() -> Self {
        let ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self(ms)
    }

    /// Weekly slot index (`day * 24 + hour`, Monday = day 0) this instant falls in, UTC.
    pub fn weekly_slot(self) -> usize {
        // 1970-01-01 was a Thursday, i.e. day 3 of a Monday-based week.
        let hours = self.0 / Self::MS_PER_HOUR;
        ((hours + 3 * 24) % (SLOTS_PER_WEEK as u64)) as usize
    }

    /// Start of the first occurrence of `slot` strictly after this instant.
    pub fn next_occurrence(self, slot: usize) -> Timestamp {
        let hour_start = self.0 - self.0 % Self::MS_PER_HOUR;
        let current = self.weekly_slot();
        let mut ahead = (slot + SLOTS_PER_WEEK - current) % SLOTS_PER_WEEK;
        if ahead == 0 {
            ahead = SLOTS_PER_WEEK;
        }
        Timestamp(hour_start + ahead as u64 * Self::MS_PER_HOUR)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UserRole {
    Student,
    Instructor,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Consent {
    pub granted: bool,
    pub at: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub user_id: UserId,
    pub display_name: String,
    pub role: UserRole,
    pub course_id: CourseId,
    pub consent: Option<Consent>,
}

impl User {
    pub fn is_instructor(&self) -> bool {
        self.role == UserRole::Instructor
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeUnit {
    pub ku_id: KuId,
    pub label: String,
    pub ordinal: u32,
}

/// Peer-learning participation role.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    ProvideSupport,
    SeekSupport,
    FindPartner,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::ProvideSupport, Role::SeekSupport, Role::FindPartner];

    pub fn index(self) -> usize {
        match self {
            Role::ProvideSupport => 0,
            Role::SeekSupport => 1,
            Role::FindPartner => 2,
        }
    }

    /// The role a peer must hold for a match with this one.
    pub fn complement(self) -> Role {
        match self {
            Role::ProvideSupport => Role::SeekSupport,
            Role::SeekSupport => Role::ProvideSupport,
            Role::FindPartner => Role::FindPartner,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weekly_slot_of_epoch_is_thursday_midnight() {
        assert_eq!(Timestamp(0).weekly_slot(), 3 * 24);
        assert_eq!(Timestamp(Timestamp::MS_PER_HOUR * 5 + 17).weekly_slot(), 3 * 24 + 5);
        // 1970-01-05 was a Monday.
        assert_eq!(Timestamp(4 * Timestamp::MS_PER_DAY).weekly_slot(), 0);
    }

    #[test]
    fn next_occurrence_is_within_one_week() {
        let now = Timestamp(4 * Timestamp::MS_PER_DAY + 90 * 60_000); // Monday 01:30
        assert_eq!(now.next_occurrence(2), Timestamp(4 * Timestamp::MS_PER_DAY + 2 * Timestamp::MS_PER_HOUR));
        assert_eq!(now.next_occurrence(1), Timestamp(11 * Timestamp::MS_PER_DAY + Timestamp::MS_PER_HOUR));
        assert_eq!(now.next_occurrence(0).weekly_slot(), 0);
    }

    #[test]
    fn role_complements() {
        for r in Role::ALL {
            assert_eq!(r.complement().complement(), r);
        }
    }
}
