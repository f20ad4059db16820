use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{KnowledgeUnit, KuId, QuestionId, Timestamp, UserId};

pub const MIN_CHOICES: usize = 2;
pub const MAX_CHOICES: usize = 6;
pub const MAX_TAGS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuestionStatus {
    Active,
    Flagged,
    Deleted,
}

/// A crowd-authored multiple-choice question.
///
/// Rich-text fields (`body`, `choices`, `solution`) hold a sanitized HTML
/// subset and are opaque to the engine except for search, which strips markup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: QuestionId,
    pub author_id: UserId,
    pub body: String,
    pub choices: Vec<String>,
    pub correct_index: usize,
    pub solution: String,
    pub tags: BTreeSet<KuId>,
    pub status: QuestionStatus,
    pub created_at: Timestamp,
}

impl Question {
    pub fn is_visible(&self) -> bool {
        self.status == QuestionStatus::Active
    }

    /// Applies an edit patch and revalidates, returning an Active question.
    pub fn patched(&self, patch: &QuestionPatch) -> Result<Question, ValidationErrors> {
        let draft = QuestionDraft {
            body: patch.body.clone().unwrap_or_else(|| self.body.clone()),
            choices: patch.choices.clone().unwrap_or_else(|| self.choices.clone()),
            correct_index: patch.correct_index.unwrap_or(self.correct_index),
            solution: patch.solution.clone().unwrap_or_else(|| self.solution.clone()),
            tags: patch.tags.clone().unwrap_or_else(|| self.tags.iter().copied().collect()),
        };
        validate_question(draft, self.question_id, self.author_id.clone(), self.created_at)
    }
}

/// A question as submitted by its author, before an id is assigned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionDraft {
    pub body: String,
    pub choices: Vec<String>,
    pub correct_index: usize,
    pub solution: String,
    pub tags: Vec<KuId>,
}

/// Instructor edit; absent fields are left unchanged.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuestionPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<KuId>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValidationError {
    NoTags,
    TooManyTags,
    BadCorrectIndex,
    TooFewChoices,
    TooManyChoices,
    EmptyBody,
    EmptySolution,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            ValidationError::NoTags => "question must be tagged with at least one topic",
            ValidationError::TooManyTags => "question may be tagged with at most four topics",
            ValidationError::BadCorrectIndex => "correct index does not name a choice",
            ValidationError::TooFewChoices => "question needs at least two choices",
            ValidationError::TooManyChoices => "question may have at most six choices",
            ValidationError::EmptyBody => "question body is empty",
            ValidationError::EmptySolution => "solution is empty",
        };
        f.write_str(msg)
    }
}

/// Every rule a draft violated, in a fixed order.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid question: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct ValidationErrors(pub Vec<ValidationError>);

/// Validates a draft and turns it into an Active question.
///
/// Tags are deduplicated before counting. All violated rules are reported.
pub fn validate_question(
    draft: QuestionDraft,
    question_id: QuestionId,
    author_id: UserId,
    created_at: Timestamp,
) -> Result<Question, ValidationErrors> {
    let tags: BTreeSet<KuId> = draft.tags.iter().copied().collect();
    let mut errors = Vec::new();
    if tags.is_empty() {
        errors.push(ValidationError::NoTags);
    }
    if tags.len() > MAX_TAGS {
        errors.push(ValidationError::TooManyTags);
    }
    if draft.correct_index >= draft.choices.len() {
        errors.push(ValidationError::BadCorrectIndex);
    }
    if draft.choices.len() < MIN_CHOICES {
        errors.push(ValidationError::TooFewChoices);
    }
    if draft.choices.len() > MAX_CHOICES {
        errors.push(ValidationError::TooManyChoices);
    }
    if draft.body.trim().is_empty() {
        errors.push(ValidationError::EmptyBody);
    }
    if draft.solution.trim().is_empty() {
        errors.push(ValidationError::EmptySolution);
    }
    if !errors.is_empty() {
        return Err(ValidationErrors(errors));
    }
    Ok(Question {
        question_id,
        author_id,
        body: draft.body,
        choices: draft.choices,
        correct_index: draft.correct_index,
        solution: draft.solution,
        tags,
        status: QuestionStatus::Active,
        created_at,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("question is tagged with unknown knowledge unit {0}")]
pub struct UnknownTag(pub KuId);

/// Row of the tag-weight matrix for one question: `1/g` on each of its `g`
/// tags, 0 elsewhere, ordered like `space`.
pub fn tag_weights(question: &Question, space: &[KnowledgeUnit]) -> Result<Vec<f64>, UnknownTag> {
    if let Some(missing) = question.tags.iter().find(|t| !space.iter().any(|ku| ku.ku_id == **t)) {
        return Err(UnknownTag(*missing));
    }
    let g = question.tags.len() as f64;
    Ok(space.iter().map(|ku| if question.tags.contains(&ku.ku_id) { 1.0 / g } else { 0.0 }).collect())
}

/// Strips tags and decodes the common entities, leaving the visible text.
pub fn strip_markup(html: &str) -> String {
    let mut out = String::with_capacity(html.len());
    let mut in_tag = false;
    for c in html.chars() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => {
                in_tag = false;
                out.push(' ');
            }
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    const ENTITIES: [(&str, &str); 6] =
        [("&lt;", "<"), ("&gt;", ">"), ("&quot;", "\""), ("&#39;", "'"), ("&nbsp;", " "), ("&amp;", "&")];
    if out.contains('&') {
        for (entity, text) in ENTITIES {
            out = out.replace(entity, text);
        }
    }
    out
}
