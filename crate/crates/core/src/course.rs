//! Course state as a fold over the event log.
//!
//! [`CourseState::apply`] is the only mutator. The knowledge model is refit
//! every `refit_every` answers and on an instructor refresh; badges are
//! evaluated as their counters move and after each refit.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{
    aggregate_stats, AvailabilityVector, Consent, CourseId, Event, EventKind, KnowledgeUnit, KuId, Question,
    QuestionId, QuestionStats, QuestionStatus, Role, Timestamp, User, UserId, UserRole,
};
use crate::event_log::{Attempt, LatestAttemptMatrix};
use crate::gamification::{
    self, badge_spec, Badge, CompetencyCounts, LeaderboardRow, Metric, Notification, UserActivity, BADGES,
};
use crate::knowledge::{
    self, cohort_distribution, knowledge_state, Band, BandThresholds, CohortSelector, CohortSummary, FactorModel,
    Hyperparameters, KnowledgeError, KnowledgeStateSnapshot, TagMatrix, NEUTRAL_STATE,
};
use crate::peers::{CompetencyPreference, MatchParams, PeerCohort, PeerProfile, Session, SessionStatus};
use crate::recommender::{
    personalized_score, recommend, PersonalizedScore, QueryOptions, QuestionCard, RecommendContext, ScoringParams,
};

/// Engine parameters shared by every course.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub hyper: Hyperparameters,
    pub thresholds: BandThresholds,
    pub scoring: ScoringParams,
    pub matching: MatchParams,
    /// Answers between automatic refits.
    pub refit_every: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            hyper: Hyperparameters::default(),
            thresholds: BandThresholds::default(),
            scoring: ScoringParams::default(),
            matching: MatchParams::default(),
            refit_every: 50,
        }
    }
}

/// A fitted model and the snapshot derived from it.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedKnowledge {
    pub model: FactorModel,
    pub users: Vec<UserId>,
    pub questions: Vec<QuestionId>,
    /// Users with at least one answer in the fitted matrix.
    pub observed: BTreeSet<UserId>,
    pub snapshot: KnowledgeStateSnapshot,
    /// Sequence number of the event that triggered the fit.
    pub seq: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicState {
    pub ku: KuId,
    pub label: String,
    pub state: f64,
    pub band: Band,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeView {
    pub user: UserId,
    /// When the underlying model was fitted; `None` before the first fit.
    pub fitted_at: Option<Timestamp>,
    pub topics: Vec<TopicState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionDetail {
    pub question: Question,
    pub stats: QuestionStats,
    pub last_attempt: Option<Attempt>,
    pub personalized: Option<PersonalizedScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngagementView {
    pub counts: BTreeMap<Metric, u64>,
    pub goals: BTreeMap<String, u64>,
    /// Mean of each metric over all students.
    pub cohort_mean: BTreeMap<Metric, f64>,
}

#[derive(Clone, Debug, Default)]
pub struct CourseState {
    pub config: EngineConfig,
    pub course_id: CourseId,
    pub name: String,
    pub host: Option<String>,
    pub topics: Vec<KnowledgeUnit>,
    pub consent_text: String,
    users: BTreeMap<UserId, User>,
    questions: BTreeMap<QuestionId, Question>,
    question_events: HashMap<QuestionId, Vec<Event>>,
    stats: HashMap<QuestionId, QuestionStats>,
    attempts: BTreeMap<UserId, BTreeMap<QuestionId, Attempt>>,
    last_correct: BTreeMap<UserId, BTreeMap<QuestionId, bool>>,
    rated: HashSet<(UserId, QuestionId)>,
    activity: BTreeMap<UserId, UserActivity>,
    availability: BTreeMap<UserId, AvailabilityVector>,
    preferences: BTreeMap<UserId, CompetencyPreference>,
    requests: BTreeMap<UserId, BTreeSet<(KuId, Role)>>,
    sessions: BTreeMap<u64, Session>,
    goals: BTreeMap<UserId, BTreeMap<String, u64>>,
    read_up_to: BTreeMap<UserId, Timestamp>,
    badges: BTreeMap<UserId, BTreeMap<&'static str, Timestamp>>,
    knowledge: Option<Arc<FittedKnowledge>>,
    answers_since_fit: u64,
    last_seq: Option<u64>,
    last_at: Timestamp,
}

impl CourseState {
    pub fn new(course_id: CourseId, config: EngineConfig) -> Self {
        Self { course_id, config, ..Default::default() }
    }

    pub fn replay<'a>(course_id: CourseId, config: EngineConfig, events: impl IntoIterator<Item = &'a Event>) -> Self {
        let mut state = Self::new(course_id, config);
        events.into_iter().for_each(|e| state.apply(e));
        state
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }

    pub fn last_at(&self) -> Timestamp {
        self.last_at
    }

    pub fn user(&self, id: &UserId) -> Option<&User> {
        self.users.get(id)
    }

    pub fn users(&self) -> impl Iterator<Item = &User> {
        self.users.values()
    }

    pub fn question(&self, id: QuestionId) -> Option<&Question> {
        self.questions.get(&id)
    }

    pub fn questions(&self) -> &BTreeMap<QuestionId, Question> {
        &self.questions
    }

    pub fn next_question_id(&self) -> QuestionId {
        QuestionId(self.questions.keys().next_back().map_or(1, |q| q.0 + 1))
    }

    pub fn stats(&self, id: QuestionId) -> QuestionStats {
        self.stats.get(&id).cloned().unwrap_or_default()
    }

    pub fn session(&self, session_ref: u64) -> Option<&Session> {
        self.sessions.get(&session_ref)
    }

    pub fn sessions_of<'a>(&'a self, user: &'a UserId) -> impl Iterator<Item = &'a Session> + 'a {
        self.sessions.values().filter(move |s| s.involves(user))
    }

    pub fn activity(&self, user: &UserId) -> UserActivity {
        self.activity.get(user).copied().unwrap_or_default()
    }

    pub fn availability(&self, user: &UserId) -> Option<AvailabilityVector> {
        self.availability.get(user).copied()
    }

    pub fn preference(&self, user: &UserId) -> CompetencyPreference {
        self.preferences.get(user).copied().unwrap_or_default()
    }

    pub fn active_requests(&self, user: &UserId) -> BTreeSet<(KuId, Role)> {
        self.requests.get(user).cloned().unwrap_or_default()
    }

    pub fn knowledge(&self) -> Option<&FittedKnowledge> {
        self.knowledge.as_deref()
    }

    pub fn flagged(&self) -> Vec<(&Question, QuestionStats)> {
        self.questions
            .values()
            .filter(|q| q.status == QuestionStatus::Flagged)
            .map(|q| (q, self.stats(q.question_id)))
            .collect()
    }

    pub fn earned_badges(&self, user: &UserId) -> impl Iterator<Item = (&'static str, Timestamp)> + '_ {
        self.badges.get(user).into_iter().flatten().map(|(id, at)| (*id, *at))
    }

    pub fn apply(&mut self, e: &Event) {
        self.last_seq = Some(e.seq);
        self.last_at = self.last_at.max(e.at);
        match &e.kind {
            EventKind::CourseCreated { name, host } => {
                self.name = name.clone();
                self.host = host.clone();
            }
            EventKind::TopicsDefined { topics } => {
                self.topics = topics.clone();
                self.topics.sort_by_key(|t| (t.ordinal, t.ku_id));
            }
            EventKind::ConsentTextSet { text } => self.consent_text = text.clone(),
            EventKind::UserJoined { user, display_name, role } => {
                self.users.insert(
                    user.clone(),
                    User {
                        user_id: user.clone(),
                        display_name: display_name.clone(),
                        role: *role,
                        course_id: self.course_id.clone(),
                        consent: None,
                    },
                );
            }
            EventKind::QuestionCreated { author, question } => {
                self.questions.insert(question.question_id, question.clone());
                self.activity.entry(author.clone()).or_default().created += 1;
                self.award(author, e.at);
            }
            EventKind::AnswerSubmitted { user, question, correct, .. } => {
                self.attempts
                    .entry(user.clone())
                    .or_default()
                    .insert(*question, Attempt { correct: *correct, at: e.at });
                self.last_correct.entry(user.clone()).or_default().insert(*question, *correct);
                let a = self.activity.entry(user.clone()).or_default();
                a.answered += 1;
                a.correct += u64::from(*correct);
                self.record_question_event(*question, e);
                self.answers_since_fit += 1;
                if self.answers_since_fit >= self.config.refit_every.max(1) {
                    self.refit(e);
                }
                self.award(user, e.at);
            }
            EventKind::DifficultyRated { user, question, .. } | EventKind::QualityRated { user, question, .. } => {
                if self.rated.insert((user.clone(), *question)) {
                    self.activity.entry(user.clone()).or_default().rated += 1;
                }
                self.record_question_event(*question, e);
            }
            EventKind::QuestionFlagged { question, .. } => {
                if let Some(q) = self.questions.get_mut(question) {
                    if q.status == QuestionStatus::Active {
                        q.status = QuestionStatus::Flagged;
                    }
                }
                self.record_question_event(*question, e);
            }
            EventKind::ModerationApplied { question, action, patch, .. } => {
                if let Some(q) = self.questions.get_mut(question) {
                    *q = crate::recommender::apply_moderation(q, *action, patch.as_ref());
                }
            }
            EventKind::KnowledgeRefreshed { .. } => self.refit(e),
            EventKind::PeerRequestPosted { user, ku, role, active } => {
                let set = self.requests.entry(user.clone()).or_default();
                if *active {
                    set.insert((*ku, *role));
                } else {
                    set.remove(&(*ku, *role));
                }
            }
            EventKind::AvailabilitySet { user, slots } => {
                self.availability.insert(user.clone(), *slots);
            }
            EventKind::PreferenceSet { user, role, epsilon } => {
                self.preferences.entry(user.clone()).or_default().set(*role, *epsilon);
            }
            EventKind::SessionRequested { from_user, to_user, slot, kus, role } => {
                self.sessions.insert(
                    e.seq,
                    Session {
                        session_ref: e.seq,
                        from_user: from_user.clone(),
                        to_user: to_user.clone(),
                        slot: *slot,
                        kus: kus.clone(),
                        role: *role,
                        requested_at: e.at,
                        status: SessionStatus::Pending,
                        responded_at: None,
                    },
                );
            }
            EventKind::SessionResponded { session_ref, accepted, .. } => self.respond(*session_ref, *accepted, e.at),
            EventKind::ConsentRecorded { user, granted } => {
                if let Some(u) = self.users.get_mut(user) {
                    u.consent = Some(Consent { granted: *granted, at: e.at });
                }
            }
            EventKind::GoalsSet { user, goals } => {
                self.goals.insert(user.clone(), goals.clone());
            }
            EventKind::NotificationsRead { user, up_to } => {
                let r = self.read_up_to.entry(user.clone()).or_default();
                *r = (*r).max(*up_to);
            }
        }
    }

    fn record_question_event(&mut self, question: QuestionId, e: &Event) {
        let events = self.question_events.entry(question).or_default();
        events.push(e.clone());
        if let Some(q) = self.questions.get(&question) {
            self.stats.insert(question, aggregate_stats(q, events.iter()));
        }
    }

    fn respond(&mut self, session_ref: u64, accepted: bool, at: Timestamp) {
        let Some(s) = self.sessions.get_mut(&session_ref) else { return };
        if s.status != SessionStatus::Pending {
            return;
        }
        s.status = if accepted { SessionStatus::Accepted } else { SessionStatus::Declined };
        s.responded_at = Some(at);
        if !accepted {
            return;
        }
        let s = s.clone();
        for user in [&s.from_user, &s.to_user] {
            if let Some(set) = self.requests.get_mut(user) {
                set.retain(|(ku, _)| !s.kus.contains(ku));
            }
        }
        if let Some(provider) = s.provider() {
            self.activity.entry(provider.clone()).or_default().provider_sessions += 1;
            self.award(provider, at);
        }
    }

    /// The latest-attempt matrix over every joined user and created question.
    pub fn attempt_matrix(&self) -> LatestAttemptMatrix {
        let users: Vec<UserId> = self.users.keys().cloned().collect();
        let questions: Vec<QuestionId> = self.questions.keys().copied().collect();
        let q_index: HashMap<QuestionId, usize> = questions.iter().enumerate().map(|(i, q)| (*q, i)).collect();
        let mut entries = BTreeMap::new();
        for (u, user) in users.iter().enumerate() {
            for (q, a) in self.attempts.get(user).into_iter().flatten() {
                if let Some(&j) = q_index.get(q) {
                    entries.insert((u, j), *a);
                }
            }
        }
        LatestAttemptMatrix { users, questions, entries }
    }

    fn refit(&mut self, trigger: &Event) {
        self.answers_since_fit = 0;
        let matrix = self.attempt_matrix();
        let model = match knowledge::fit(&matrix, &self.config.hyper) {
            Ok(m) => m,
            Err(KnowledgeError::EmptyMatrix) => return,
            Err(err) => panic!("knowledge refit failed: {err}"),
        };
        let omega = TagMatrix::build(matrix.questions.iter().map(|q| &self.questions[q]), &self.topics)
            .expect("the log rejects tags outside the topic space");
        let snapshot =
            knowledge_state(&model, &omega, trigger.at, &self.config.thresholds).expect("tag matrix matches the model");
        let observed = matrix.entries.keys().map(|(u, _)| matrix.users[*u].clone()).collect();
        self.knowledge = Some(Arc::new(FittedKnowledge {
            model,
            observed,
            users: matrix.users,
            questions: matrix.questions,
            snapshot,
            seq: trigger.seq,
        }));
        let users: Vec<UserId> = self.users.keys().cloned().collect();
        for u in &users {
            self.award(u, trigger.at);
        }
    }

    /// Model state of `user` on `ku`, neutral when unknown.
    pub fn state_of(&self, user: &UserId, ku: KuId) -> f64 {
        self.knowledge
            .as_deref()
            .and_then(|k| {
                let row = k.users.binary_search(user).ok()?;
                let col = k.snapshot.ku_index(ku)?;
                Some(k.snapshot.states[row][col])
            })
            .unwrap_or(NEUTRAL_STATE)
    }

    pub fn band_of(&self, user: &UserId, ku: KuId) -> Band {
        knowledge::mastery_band(self.state_of(user, ku), &self.config.thresholds).unwrap_or(Band::Red)
    }

    pub fn predict(&self, user: &UserId, question: QuestionId) -> Option<f64> {
        let k = self.knowledge.as_deref()?;
        let u = k.users.binary_search(user).ok()?;
        let q = k.questions.binary_search(&question).ok()?;
        k.model.predict(u, q).ok()
    }

    /// Band counts over the current topics; empty for users without answers
    /// in the latest fit, so neutral states earn nothing.
    pub fn competency(&self, user: &UserId) -> CompetencyCounts {
        if !self.knowledge.as_deref().is_some_and(|k| k.observed.contains(user)) {
            return CompetencyCounts::default();
        }
        let mut c = CompetencyCounts { topics: self.topics.len() as u64, ..Default::default() };
        for t in &self.topics {
            match self.band_of(user, t.ku_id) {
                Band::Blue => {
                    c.blue += 1;
                    c.yellow_or_better += 1;
                }
                Band::Yellow => c.yellow_or_better += 1,
                Band::Red => {}
            }
        }
        c
    }

    fn award(&mut self, user: &UserId, at: Timestamp) {
        let activity = self.activity(user);
        let competency = self.competency(user);
        let earned = self.badges.entry(user.clone()).or_default();
        for spec in gamification::award_badges(&activity, &competency, |id| earned.contains_key(id)) {
            earned.insert(spec.id, at);
        }
    }

    pub fn badges(&self, user: &UserId) -> Vec<Badge> {
        let activity = self.activity(user);
        let competency = self.competency(user);
        let earned = self.badges.get(user);
        BADGES
            .iter()
            .map(|spec| {
                let at = earned.and_then(|e| e.get(spec.id)).copied();
                Badge::new(spec, at, spec.progress(&activity, &competency))
            })
            .collect()
    }

    pub fn notifications(&self, user: &UserId, now: Timestamp) -> Vec<Notification> {
        let earned = self.earned_badges(user).filter_map(|(id, at)| Some((badge_spec(id)?, at)));
        gamification::notifications(user, earned, self.sessions_of(user), now, self.read_up_to.get(user).copied())
    }

    fn achievements(&self, user: &UserId) -> u64 {
        self.badges.get(user).map_or(0, |b| b.len() as u64)
    }

    pub fn metric(&self, user: &UserId, metric: Metric) -> u64 {
        self.activity(user).metric(metric, self.achievements(user))
    }

    /// Leaderboard over students, including those with a zero count.
    pub fn leaderboard(&self, metric: Metric, top_n: usize) -> Vec<LeaderboardRow> {
        let values = self
            .users
            .values()
            .filter(|u| u.role == UserRole::Student)
            .map(|u| (u.user_id.clone(), self.metric(&u.user_id, metric)));
        gamification::leaderboard(values, top_n)
    }

    pub fn engagement(&self, user: &UserId) -> EngagementView {
        let students: Vec<&UserId> =
            self.users.values().filter(|u| u.role == UserRole::Student).map(|u| &u.user_id).collect();
        let counts = Metric::ALL.into_iter().map(|m| (m, self.metric(user, m))).collect();
        let cohort_mean = Metric::ALL
            .into_iter()
            .map(|m| {
                let total: u64 = students.iter().map(|u| self.metric(u, m)).sum();
                (m, if students.is_empty() { 0.0 } else { total as f64 / students.len() as f64 })
            })
            .collect();
        EngagementView { counts, goals: self.goals.get(user).cloned().unwrap_or_default(), cohort_mean }
    }

    pub fn knowledge_view(&self, user: &UserId) -> KnowledgeView {
        let topics = self
            .topics
            .iter()
            .map(|t| TopicState {
                ku: t.ku_id,
                label: t.label.clone(),
                state: self.state_of(user, t.ku_id),
                band: self.band_of(user, t.ku_id),
            })
            .collect();
        KnowledgeView { user: user.clone(), fitted_at: self.knowledge.as_ref().map(|k| k.snapshot.at), topics }
    }

    /// Knowledge views of every student.
    pub fn progress(&self) -> Vec<KnowledgeView> {
        self.users.values().filter(|u| u.role == UserRole::Student).map(|u| self.knowledge_view(&u.user_id)).collect()
    }

    /// Student states over the current topics.
    pub fn student_snapshot(&self) -> KnowledgeStateSnapshot {
        let kus: Vec<KuId> = self.topics.iter().map(|t| t.ku_id).collect();
        let mut snap = KnowledgeStateSnapshot {
            at: self.knowledge.as_ref().map_or(self.last_at, |k| k.snapshot.at),
            kus: kus.clone(),
            states: Vec::new(),
            bands: Vec::new(),
        };
        for u in self.users.values().filter(|u| u.role == UserRole::Student) {
            snap.states.push(kus.iter().map(|k| self.state_of(&u.user_id, *k)).collect());
            snap.bands.push(kus.iter().map(|k| self.band_of(&u.user_id, *k)).collect());
        }
        snap
    }

    pub fn cohort(&self, selector: CohortSelector) -> Result<Vec<CohortSummary>, KnowledgeError> {
        cohort_distribution(&self.student_snapshot(), selector)
    }

    pub fn recommend(&self, user: &UserId, options: &QueryOptions) -> Vec<QuestionCard> {
        let empty = BTreeMap::new();
        let predict = |q: QuestionId| self.predict(user, q);
        let ctx = RecommendContext {
            questions: &self.questions,
            stats: &self.stats,
            attempts: self.last_correct.get(user).unwrap_or(&empty),
            predict: &predict,
            topics: &self.topics,
            params: &self.config.scoring,
        };
        recommend(&ctx, options)
    }

    pub fn question_detail(&self, user: &UserId, id: QuestionId) -> Option<QuestionDetail> {
        let question = self.questions.get(&id)?.clone();
        let stats = self.stats(id);
        let last_attempt = self.attempts.get(user).and_then(|a| a.get(&id)).copied();
        let personalized = personalized_score(
            &question,
            self.predict(user, id),
            &stats,
            last_attempt.map(|a| a.correct),
            &self.config.scoring,
        )
        .ok();
        Some(QuestionDetail { question, stats, last_attempt, personalized })
    }

    pub fn peer_cohort(&self) -> PeerCohort {
        let params = MatchParams { provide_threshold: self.config.thresholds.blue, ..self.config.matching };
        let profiles = self.users.keys().map(|u| PeerProfile {
            user: u.clone(),
            availability: self.availability(u),
            preference: self.preference(u),
            requests: self.active_requests(u),
            states: self.topics.iter().map(|t| (t.ku_id, self.state_of(u, t.ku_id))).collect(),
        });
        PeerCohort::new(profiles, params)
    }
}
