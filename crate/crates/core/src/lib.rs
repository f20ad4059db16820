//! Engine for an adaptive, crowdsourced peer-learning platform.
//!
//! Every user action is an [`Event`](domain::Event) appended to a per-course
//! log ([`event_log`]). All other state is a replay of that log
//! ([`course::CourseState`]): knowledge states from a matrix-factorization
//! model ([`knowledge`]), personalised question ranking ([`recommender`]),
//! reciprocal peer matching ([`peers`]) and leaderboards and badges
//! ([`gamification`]). [`sim`] generates synthetic cohorts and evaluates the
//! engine against them.

pub mod course;
pub mod domain;
pub mod event_log;
pub mod gamification;
pub mod knowledge;
pub mod peers;
pub mod recommender;
pub mod sim;

pub use course::{CourseState, EngineConfig};
pub use domain::*;
pub use event_log::{export_csv, CourseLog, EventStore, LatestAttemptMatrix, LogError, CSV_HEADER};
pub use knowledge::{fit, Band, BandThresholds, CohortSelector, FactorModel, Hyperparameters};
pub use peers::{recommend_peers, PeerCohort, PeerRecommendation, Session, SessionStatus};
pub use recommender::{recommend, QueryOptions, QuestionCard};
