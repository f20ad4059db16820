use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_question, CourseId, EventKind, KnowledgeUnit, KuId, QuestionDraft, QuestionId, Timestamp, UserId, UserRole,
};
use crate::event_log::{EventStore, LogError};

use super::generator::INSTRUCTOR;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedQuestion {
    pub body: String,
    pub choices: Vec<String>,
    pub correct_index: usize,
    pub solution: String,
    /// Topic labels.
    pub tags: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedFile {
    #[serde(default)]
    pub topics: Vec<String>,
    #[serde(default)]
    pub questions: Vec<SeedQuestion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// Position in the `questions` array, from 0.
    pub index: usize,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub course: CourseId,
    pub topics_inserted: usize,
    pub questions_inserted: usize,
    pub rejected: Vec<RejectedRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum SeedError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Log(#[from] LogError),
}

pub fn parse_seed_file(path: &Path, text: &str) -> Result<SeedFile, SeedError> {
    serde_json::from_str(text).map_err(|e| SeedError::Parse {
        path: path.to_owned(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Appends a seed file's topics and questions to a course, creating the
/// course and its instructor if needed. Invalid questions are reported and
/// skipped; topics already present (by label) are reused.
pub fn seed_course(
    store: &mut EventStore,
    name: &str,
    code: &CourseId,
    file: &Path,
    host: Option<&str>,
    at: Timestamp,
) -> Result<SeedReport, SeedError> {
    let text = std::fs::read_to_string(file).map_err(|source| SeedError::Io { path: file.to_owned(), source })?;
    let seed = parse_seed_file(file, &text)?;
    if store.log(code).is_err() {
        store.create_course(code)?;
        store.append(code, at, EventKind::CourseCreated { name: name.to_owned(), host: host.map(str::to_owned) })?;
    }
    let instructor = UserId::new(INSTRUCTOR);
    let mut topics: Vec<KnowledgeUnit> = Vec::new();
    let mut has_instructor = false;
    let mut next_question = 1;
    for e in store.log(code)?.events() {
        match &e.kind {
            EventKind::TopicsDefined { topics: t } => topics = t.clone(),
            EventKind::UserJoined { user, .. } if *user == instructor => has_instructor = true,
            EventKind::QuestionCreated { question, .. } => {
                next_question = next_question.max(question.question_id.0 + 1)
            }
            _ => {}
        }
    }
    if !has_instructor {
        let kind = EventKind::UserJoined {
            user: instructor.clone(),
            display_name: "Instructor".into(),
            role: UserRole::Instructor,
        };
        store.append(code, at, kind)?;
    }

    let mut topics_inserted = 0;
    for label in &seed.topics {
        let label = label.trim();
        if label.is_empty() || topics.iter().any(|t| t.label == label) {
            continue;
        }
        let ku_id = KuId(topics.iter().map(|t| t.ku_id.0).max().unwrap_or(0) + 1);
        let ordinal = topics.iter().map(|t| t.ordinal + 1).max().unwrap_or(0);
        topics.push(KnowledgeUnit { ku_id, label: label.to_owned(), ordinal });
        topics_inserted += 1;
    }
    if topics_inserted > 0 {
        store.append(code, at, EventKind::TopicsDefined { topics: topics.clone() })?;
    }

    let mut rejected = Vec::new();
    let mut questions_inserted = 0;
    for (index, q) in seed.questions.into_iter().enumerate() {
        let (known, unknown): (Vec<_>, Vec<_>) = q
            .tags
            .iter()
            .map(|label| (label, topics.iter().find(|t| t.label == label.trim())))
            .partition(|(_, t)| t.is_some());
        let mut errors: Vec<String> = unknown.iter().map(|(label, _)| format!("unknown topic {label:?}")).collect();
        let mut tags: Vec<KuId> = known.iter().filter_map(|(_, t)| t.map(|t| t.ku_id)).collect();
        // Unknown labels still count towards the tag limit.
        tags.extend((0..unknown.len()).map(|i| KuId(u32::MAX - i as u32)));
        let draft = QuestionDraft {
            body: q.body,
            choices: q.choices,
            correct_index: q.correct_index,
            solution: q.solution,
            tags,
        };
        match validate_question(draft, QuestionId(next_question), instructor.clone(), at) {
            Ok(question) if errors.is_empty() => {
                store.append(code, at, EventKind::QuestionCreated { author: instructor.clone(), question })?;
                next_question += 1;
                questions_inserted += 1;
            }
            Ok(_) => rejected.push(RejectedRow { index, errors }),
            Err(e) => {
                errors.extend(e.0.iter().map(|v| v.to_string()));
                rejected.push(RejectedRow { index, errors });
            }
        }
    }
    Ok(SeedReport { course: code.clone(), topics_inserted, questions_inserted, rejected })
}
