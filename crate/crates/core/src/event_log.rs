//! Append-only, file-backed event logs, one JSON-Lines file per course.
//!
//! A [`CourseLog`] is the single writer for its course. Appends are written
//! and flushed before they return, and the in-memory copy is updated only
//! after the write succeeds, so file and memory always agree.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{CourseId, Event, EventKind, KuId, QuestionId, Timestamp, UserId};

pub const LOG_EXTENSION: &str = "jsonl";

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("storage failure: {0}")]
    StorageFailure(#[from] io::Error),
    #[error("unknown reference: {0}")]
    UnknownReference(String),
    #[error("duplicate id: {0}")]
    Duplicate(String),
    #[error("answer to question {0} disagrees with its correct index")]
    InconsistentAnswer(QuestionId),
    #[error("unknown course {0}")]
    UnknownCourse(CourseId),
    #[error("course {0} already exists")]
    CourseExists(CourseId),
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

/// Ids known at a point in the log, used to reject dangling references.
#[derive(Clone, Debug, Default)]
struct References {
    users: HashSet<UserId>,
    /// question -> (correct_index, choice count)
    questions: HashMap<QuestionId, (usize, usize)>,
    tags: HashMap<QuestionId, BTreeSet<KuId>>,
    kus: HashSet<KuId>,
    sessions: HashSet<u64>,
}

impl References {
    fn user(&self, u: &UserId) -> Result<(), LogError> {
        if self.users.contains(u) {
            Ok(())
        } else {
            Err(LogError::UnknownReference(format!("user {u}")))
        }
    }

    fn question(&self, q: QuestionId) -> Result<(usize, usize), LogError> {
        self.questions.get(&q).copied().ok_or_else(|| LogError::UnknownReference(format!("question {q}")))
    }

    fn ku(&self, ku: KuId) -> Result<(), LogError> {
        if self.kus.contains(&ku) {
            Ok(())
        } else {
            Err(LogError::UnknownReference(format!("knowledge unit {ku}")))
        }
    }

    fn check(&self, kind: &EventKind) -> Result<(), LogError> {
        match kind {
            EventKind::CourseCreated { .. } | EventKind::ConsentTextSet { .. } => Ok(()),
            EventKind::TopicsDefined { topics } => {
                let mut ids = HashSet::new();
                for t in topics {
                    if !ids.insert(t.ku_id) {
                        return Err(LogError::Duplicate(format!("knowledge unit {}", t.ku_id)));
                    }
                }
                match self.tags.values().flatten().find(|ku| !ids.contains(ku)) {
                    Some(ku) => Err(LogError::UnknownReference(format!("knowledge unit {ku} is still tagged"))),
                    None => Ok(()),
                }
            }
            EventKind::UserJoined { user, .. } => {
                if self.users.contains(user) {
                    Err(LogError::Duplicate(format!("user {user}")))
                } else {
                    Ok(())
                }
            }
            EventKind::QuestionCreated { author, question } => {
                self.user(author)?;
                if self.questions.contains_key(&question.question_id) {
                    return Err(LogError::Duplicate(format!("question {}", question.question_id)));
                }
                question.tags.iter().try_for_each(|t| self.ku(*t))
            }
            EventKind::AnswerSubmitted { user, question, chosen_index, correct } => {
                self.user(user)?;
                let (correct_index, choices) = self.question(*question)?;
                if *chosen_index >= choices || *correct != (*chosen_index == correct_index) {
                    return Err(LogError::InconsistentAnswer(*question));
                }
                Ok(())
            }
            EventKind::DifficultyRated { user, question, .. }
            | EventKind::QualityRated { user, question, .. }
            | EventKind::QuestionFlagged { user, question, .. } => {
                self.user(user)?;
                self.question(*question).map(|_| ())
            }
            EventKind::ModerationApplied { instructor, question, patch, .. } => {
                self.user(instructor)?;
                self.question(*question)?;
                if let Some(tags) = patch.as_ref().and_then(|p| p.tags.as_ref()) {
                    tags.iter().try_for_each(|t| self.ku(*t))?;
                }
                Ok(())
            }
            EventKind::KnowledgeRefreshed { instructor } => self.user(instructor),
            EventKind::PeerRequestPosted { user, ku, .. } => {
                self.user(user)?;
                self.ku(*ku)
            }
            EventKind::AvailabilitySet { user, .. }
            | EventKind::PreferenceSet { user, .. }
            | EventKind::ConsentRecorded { user, .. }
            | EventKind::GoalsSet { user, .. }
            | EventKind::NotificationsRead { user, .. } => self.user(user),
            EventKind::SessionRequested { from_user, to_user, kus, .. } => {
                self.user(from_user)?;
                self.user(to_user)?;
                kus.iter().try_for_each(|k| self.ku(*k))
            }
            EventKind::SessionResponded { user, session_ref, .. } => {
                self.user(user)?;
                if self.sessions.contains(session_ref) {
                    Ok(())
                } else {
                    Err(LogError::UnknownReference(format!("session {session_ref}")))
                }
            }
        }
    }

    fn record(&mut self, event: &Event) {
        match &event.kind {
            EventKind::TopicsDefined { topics } => {
                self.kus = topics.iter().map(|t| t.ku_id).collect();
            }
            EventKind::UserJoined { user, .. } => {
                self.users.insert(user.clone());
            }
            EventKind::QuestionCreated { question, .. } => {
                self.questions.insert(question.question_id, (question.correct_index, question.choices.len()));
                self.tags.insert(question.question_id, question.tags.clone());
            }
            EventKind::ModerationApplied { question, patch: Some(patch), .. } => {
                if let Some(entry) = self.questions.get_mut(question) {
                    if let Some(ci) = patch.correct_index {
                        entry.0 = ci;
                    }
                    if let Some(choices) = &patch.choices {
                        entry.1 = choices.len();
                    }
                }
                if let Some(tags) = &patch.tags {
                    self.tags.insert(*question, tags.iter().copied().collect());
                }
            }
            EventKind::SessionRequested { .. } => {
                self.sessions.insert(event.seq);
            }
            _ => {}
        }
    }
}

/// The most recent answer of one user to one question.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub correct: bool,
    pub at: Timestamp,
}

/// Sparse users x questions matrix of latest attempts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LatestAttemptMatrix {
    pub users: Vec<UserId>,
    pub questions: Vec<QuestionId>,
    pub entries: BTreeMap<(usize, usize), Attempt>,
}

impl LatestAttemptMatrix {
    /// Builds the matrix from an ordered event stream. Users and questions are
    /// every one that joined or was created in the stream, sorted by id.
    pub fn from_events<'a, I: IntoIterator<Item = &'a Event>>(events: I) -> Self {
        let mut users = std::collections::BTreeSet::new();
        let mut questions = std::collections::BTreeSet::new();
        let mut latest: HashMap<(UserId, QuestionId), Attempt> = HashMap::new();
        for e in events {
            match &e.kind {
                EventKind::UserJoined { user, .. } => {
                    users.insert(user.clone());
                }
                EventKind::QuestionCreated { question, .. } => {
                    questions.insert(question.question_id);
                }
                EventKind::AnswerSubmitted { user, question, correct, .. } => {
                    users.insert(user.clone());
                    questions.insert(*question);
                    // Stream is in seq order with non-decreasing `at`: later wins.
                    latest.insert((user.clone(), *question), Attempt { correct: *correct, at: e.at });
                }
                _ => {}
            }
        }
        let users: Vec<UserId> = users.into_iter().collect();
        let questions: Vec<QuestionId> = questions.into_iter().collect();
        let entries = latest
            .into_iter()
            .map(|((u, q), a)| {
                let ui = users.binary_search(&u).expect("user collected above");
                let qi = questions.binary_search(&q).expect("question collected above");
                ((ui, qi), a)
            })
            .collect();
        Self { users, questions, entries }
    }

    pub fn user_index(&self, user: &UserId) -> Option<usize> {
        self.users.binary_search(user).ok()
    }

    pub fn question_index(&self, question: QuestionId) -> Option<usize> {
        self.questions.binary_search(&question).ok()
    }

    pub fn get(&self, user: &UserId, question: QuestionId) -> Option<Attempt> {
        let key = (self.user_index(user)?, self.question_index(question)?);
        self.entries.get(&key).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Append-only log of one course.
#[derive(Debug)]
pub struct CourseLog {
    course_id: CourseId,
    path: PathBuf,
    file: File,
    next_seq: u64,
    events: Vec<Event>,
    /// Positions of AnswerSubmitted events per (user, question), ascending.
    index: HashMap<(UserId, QuestionId), Vec<usize>>,
    refs: References,
    sync: bool,
}

impl CourseLog {
    /// Creates an empty log file; fails if one already exists.
    pub fn create(path: impl Into<PathBuf>, course_id: CourseId) -> Result<Self, LogError> {
        let path = path.into();
        let file = OpenOptions::new().append(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == io::ErrorKind::AlreadyExists {
                LogError::CourseExists(course_id.clone())
            } else {
                LogError::StorageFailure(e)
            }
        })?;
        Ok(Self {
            course_id,
            path,
            file,
            next_seq: 1,
            events: Vec::new(),
            index: HashMap::new(),
            refs: References::default(),
            sync: true,
        })
    }

    /// Opens an existing log, validating every line.
    pub fn open(path: impl Into<PathBuf>, course_id: CourseId) -> Result<Self, LogError> {
        let path = path.into();
        let reader = BufReader::new(File::open(&path)?);
        let file = OpenOptions::new().append(true).open(&path)?;
        let mut log = Self {
            course_id,
            path,
            file,
            next_seq: 1,
            events: Vec::new(),
            index: HashMap::new(),
            refs: References::default(),
            sync: true,
        };
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |message: String| LogError::Corrupt { path: log.path.clone(), line: i + 1, message };
            let event: Event = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if event.seq != log.next_seq {
                return Err(corrupt(format!("expected seq {}, found {}", log.next_seq, event.seq)));
            }
            if event.course != log.course_id {
                return Err(corrupt(format!("event belongs to course {}", event.course)));
            }
            if event.at < log.last_at() {
                return Err(corrupt("timestamp decreases".into()));
            }
            log.refs.check(&event.kind).map_err(|e| corrupt(e.to_string()))?;
            log.push(event);
        }
        Ok(log)
    }

    /// Whether appends call `fsync` before returning (default on).
    pub fn set_sync(&mut self, sync: bool) {
        self.sync = sync;
    }

    pub fn course_id(&self) -> &CourseId {
        &self.course_id
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_at(&self) -> Timestamp {
        self.events.last().map(|e| e.at).unwrap_or_default()
    }

    /// Checks that `kind` would be accepted by [`append`](Self::append).
    pub fn check(&self, kind: &EventKind) -> Result<(), LogError> {
        self.refs.check(kind)
    }

    /// Appends an event, clamping `at` up to the previous event's timestamp.
    /// Returns the stored event.
    pub fn append(&mut self, at: Timestamp, kind: EventKind) -> Result<&Event, LogError> {
        self.refs.check(&kind)?;
        let event = Event { seq: self.next_seq, at: at.max(self.last_at()), course: self.course_id.clone(), kind };
        let mut line = serde_json::to_vec(&event).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        if self.sync {
            self.file.sync_data()?;
        }
        self.push(event);
        Ok(self.events.last().expect("just pushed"))
    }

    fn push(&mut self, event: Event) {
        self.refs.record(&event);
        if let EventKind::AnswerSubmitted { user, question, .. } = &event.kind {
            self.index.entry((user.clone(), *question)).or_default().push(self.events.len());
        }
        self.next_seq = event.seq + 1;
        self.events.push(event);
    }

    /// Events with `at <= up_to` (all when `None`), in sequence order.
    pub fn replay(&self, up_to: Option<Timestamp>) -> &[Event] {
        match up_to {
            None => &self.events,
            Some(t) => &self.events[..self.events.partition_point(|e| e.at <= t)],
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Latest attempt per (user, question) among answers with `at <= up_to`.
    pub fn latest_attempts(&self, up_to: Option<Timestamp>) -> LatestAttemptMatrix {
        let prefix = self.replay(up_to);
        let cutoff = prefix.len();
        let mut users = std::collections::BTreeSet::new();
        let mut questions = std::collections::BTreeSet::new();
        for e in prefix {
            match &e.kind {
                EventKind::UserJoined { user, .. } => {
                    users.insert(user.clone());
                }
                EventKind::QuestionCreated { question, .. } => {
                    questions.insert(question.question_id);
                }
                _ => {}
            }
        }
        let users: Vec<UserId> = users.into_iter().collect();
        let questions: Vec<QuestionId> = questions.into_iter().collect();
        let mut entries = BTreeMap::new();
        for ((user, question), positions) in &self.index {
            let n = positions.partition_point(|&p| p < cutoff);
            if n == 0 {
                continue;
            }
            let e = &self.events[positions[n - 1]];
            let EventKind::AnswerSubmitted { correct, .. } = e.kind else { unreachable!("index holds answers only") };
            let (Ok(ui), Ok(qi)) = (users.binary_search(user), questions.binary_search(question)) else {
                continue;
            };
            entries.insert((ui, qi), Attempt { correct, at: e.at });
        }
        LatestAttemptMatrix { users, questions, entries }
    }

    /// CSV export of the whole log, without rows of users who declined consent.
    pub fn export_csv(&self) -> String {
        export_csv(&self.events)
    }
}

pub const CSV_HEADER: [&str; 8] = ["seq", "at", "kind", "user", "question", "ku", "role", "value"];

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

fn csv_row(e: &Event) -> [String; 8] {
    let mut user = String::new();
    let mut question = String::new();
    let mut ku = String::new();
    let mut role = String::new();
    let mut value = String::new();
    if let Some(u) = e.kind.user() {
        user = u.to_string();
    }
    if let Some(q) = e.kind.question() {
        question = q.to_string();
    }
    match &e.kind {
        EventKind::CourseCreated { name, .. } => value = name.clone(),
        EventKind::TopicsDefined { topics } => {
            ku = join(topics.iter().map(|t| t.ku_id));
            value = join(topics.iter().map(|t| t.label.as_str()));
        }
        EventKind::ConsentTextSet { text } => value = text.clone(),
        EventKind::UserJoined { role: r, display_name, .. } => {
            role = format!("{r:?}");
            value = display_name.clone();
        }
        EventKind::QuestionCreated { question: q, .. } => ku = join(&q.tags),
        EventKind::AnswerSubmitted { correct, .. } => value = u8::from(*correct).to_string(),
        EventKind::DifficultyRated { stars, .. } | EventKind::QualityRated { stars, .. } => value = stars.to_string(),
        EventKind::QuestionFlagged { reason, .. } => value = reason.clone(),
        EventKind::ModerationApplied { action, .. } => value = format!("{action:?}"),
        EventKind::KnowledgeRefreshed { .. } => {}
        EventKind::PeerRequestPosted { ku: k, role: r, active, .. } => {
            ku = k.to_string();
            role = format!("{r:?}");
            value = active.to_string();
        }
        EventKind::AvailabilitySet { slots, .. } => value = join(slots.slots()),
        EventKind::PreferenceSet { role: r, epsilon, .. } => {
            role = format!("{r:?}");
            value = epsilon.to_string();
        }
        EventKind::SessionRequested { to_user, slot, kus, role: r, .. } => {
            ku = join(kus);
            role = format!("{r:?}");
            value = format!("{to_user}@{slot}");
        }
        EventKind::SessionResponded { session_ref, accepted, .. } => value = format!("{session_ref}:{accepted}"),
        EventKind::ConsentRecorded { granted, .. } => value = granted.to_string(),
        EventKind::GoalsSet { goals, .. } => value = join(goals.iter().map(|(k, v)| format!("{k}={v}"))),
        EventKind::NotificationsRead { up_to, .. } => value = up_to.0.to_string(),
    }
    [e.seq.to_string(), e.at.0.to_string(), e.kind.name().to_owned(), user, question, ku, role, value]
}

/// Users whose most recent consent decision is a refusal.
pub fn declined_consent<'a, I: IntoIterator<Item = &'a Event>>(events: I) -> HashSet<UserId> {
    let mut latest: HashMap<&UserId, bool> = HashMap::new();
    for e in events {
        if let EventKind::ConsentRecorded { user, granted } = &e.kind {
            latest.insert(user, *granted);
        }
    }
    latest.into_iter().filter(|(_, g)| !g).map(|(u, _)| u.clone()).collect()
}

/// RFC-4180 CSV of an event stream with LF line endings.
pub fn export_csv(events: &[Event]) -> String {
    let declined = declined_consent(events);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("writing to memory");
    for e in events {
        if e.kind.user().is_some_and(|u| declined.contains(u)) {
            continue;
        }
        w.write_record(csv_row(e)).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv of utf-8 fields")
}

/// Directory of course logs, `<dir>/<course>.jsonl`.
#[derive(Debug)]
pub struct EventStore {
    dir: PathBuf,
    logs: BTreeMap<CourseId, CourseLog>,
}

impl EventStore {
    /// Opens (creating if needed) a data directory and loads every course log in it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, LogError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut logs = BTreeMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some(LOG_EXTENSION) {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            if stem.contains('.') {
                continue; // e.g. `<course>.holdout.jsonl`
            }
            let id = CourseId::new(stem);
            logs.insert(id.clone(), CourseLog::open(&path, id)?);
        }
        Ok(Self { dir, logs })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(dir: &Path, course: &CourseId) -> PathBuf {
        dir.join(format!("{}.{LOG_EXTENSION}", course.as_str()))
    }

    pub fn create_course(&mut self, course: &CourseId) -> Result<&mut CourseLog, LogError> {
        if self.logs.contains_key(course) {
            return Err(LogError::CourseExists(course.clone()));
        }
        let log = CourseLog::create(Self::log_path(&self.dir, course), course.clone())?;
        Ok(self.logs.entry(course.clone()).or_insert(log))
    }

    pub fn courses(&self) -> impl Iterator<Item = &CourseId> {
        self.logs.keys()
    }

    pub fn log(&self, course: &CourseId) -> Result<&CourseLog, LogError> {
        self.logs.get(course).ok_or_else(|| LogError::UnknownCourse(course.clone()))
    }

    pub fn log_mut(&mut self, course: &CourseId) -> Result<&mut CourseLog, LogError> {
        self.logs.get_mut(course).ok_or_else(|| LogError::UnknownCourse(course.clone()))
    }

    /// Takes ownership of every log, e.g. to hand each to its own writer.
    pub fn into_logs(self) -> BTreeMap<CourseId, CourseLog> {
        self.logs
    }

    pub fn append(&mut self, course: &CourseId, at: Timestamp, kind: EventKind) -> Result<u64, LogError> {
        Ok(self.log_mut(course)?.append(at, kind)?.seq)
    }

    pub fn replay(&self, course: &CourseId, up_to: Option<Timestamp>) -> Result<&[Event], LogError> {
        Ok(self.log(course)?.replay(up_to))
    }

    pub fn latest_attempts(
        &self,
        course: &CourseId,
        up_to: Option<Timestamp>,
    ) -> Result<LatestAttemptMatrix, LogError> {
        Ok(self.log(course)?.latest_attempts(up_to))
    }

    pub fn export_csv(&self, course: &CourseId) -> Result<String, LogError> {
        Ok(self.log(course)?.export_csv())
    }
}
