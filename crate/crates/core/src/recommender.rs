//! Personalised question scores, question-card queries, and the
//! flag/moderation workflow.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::{
    strip_markup, EventKind, KnowledgeUnit, ModerationAction, Question, QuestionId, QuestionPatch, QuestionStats,
    QuestionStatus, User, UserId, ValidationErrors,
};

const PREVIEW_CHARS: usize = 140;

/// Course-configurable parameters of the personalised score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringParams {
    /// Desirable success probability.
    pub target: f64,
    /// Width of the Gaussian around `target`.
    pub sigma: f64,
    /// Weights of (difficulty fit, quality, novelty); they sum to 1.
    pub weights: [f64; 3],
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self { target: 0.65, sigma: 0.2, weights: [0.5, 0.3, 0.2] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreComponents {
    pub difficulty_fit: f64,
    pub quality: f64,
    pub novelty: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonalizedScore {
    pub value: f64,
    pub components: ScoreComponents,
    /// No prediction was available; the value is the novelty alone.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecommendError {
    #[error("question {0} is deleted")]
    DeletedQuestion(QuestionId),
}

/// Scores one question for one user.
///
/// `predicted` is the model's success probability for the pair, `None` when
/// the model does not cover the question yet. `last_attempt` is the
/// correctness of the user's latest answer, `None` if never answered.
pub fn personalized_score(
    question: &Question,
    predicted: Option<f64>,
    stats: &QuestionStats,
    last_attempt: Option<bool>,
    params: &ScoringParams,
) -> Result<PersonalizedScore, RecommendError> {
    if question.status == QuestionStatus::Deleted {
        return Err(RecommendError::DeletedQuestion(question.question_id));
    }
    let quality = stats.mean_quality.map_or(0.5, |q| ((q - 1.0) / 4.0).clamp(0.0, 1.0));
    let novelty = match last_attempt {
        None => 1.0,
        Some(true) => 0.5,
        Some(false) => 0.75,
    };
    let Some(p) = predicted else {
        return Ok(PersonalizedScore {
            value: novelty,
            components: ScoreComponents { difficulty_fit: 0.0, quality, novelty },
            fallback: true,
        });
    };
    let d = p - params.target;
    let difficulty_fit = (-(d * d) / (2.0 * params.sigma * params.sigma)).exp();
    let [w1, w2, w3] = params.weights;
    Ok(PersonalizedScore {
        value: (w1 * difficulty_fit + w2 * quality + w3 * novelty).clamp(0.0, 1.0),
        components: ScoreComponents { difficulty_fit, quality, novelty },
        fallback: false,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SortKey {
    Difficulty,
    Quality,
    Responses,
    #[default]
    Personalized,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnswerFilter {
    #[default]
    All,
    Unanswered,
    Answered,
    /// Questions whose latest attempt was wrong.
    WrongAnswered,
}

impl std::str::FromStr for SortKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "difficulty" => Ok(SortKey::Difficulty),
            "quality" => Ok(SortKey::Quality),
            "responses" => Ok(SortKey::Responses),
            "personalized" | "personalised" => Ok(SortKey::Personalized),
            _ => Err(format!("unknown sort key {s:?}")),
        }
    }
}

impl std::str::FromStr for AnswerFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(AnswerFilter::All),
            "unanswered" => Ok(AnswerFilter::Unanswered),
            "answered" => Ok(AnswerFilter::Answered),
            "wrong" | "wronganswered" | "wrong_answered" => Ok(AnswerFilter::WrongAnswered),
            _ => Err(format!("unknown filter {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryOptions {
    pub sort: SortKey,
    pub filter: AnswerFilter,
    pub search: Option<String>,
    pub limit: usize,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self { sort: SortKey::default(), filter: AnswerFilter::default(), search: None, limit: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionCard {
    pub question_id: QuestionId,
    pub preview: String,
    pub tags: Vec<String>,
    pub responses: u64,
    pub mean_difficulty: Option<f64>,
    pub mean_quality: Option<f64>,
    pub personalized: f64,
}

/// Everything `recommend` reads, borrowed from a course snapshot.
pub struct RecommendContext<'a> {
    pub questions: &'a BTreeMap<QuestionId, Question>,
    pub stats: &'a HashMap<QuestionId, QuestionStats>,
    /// The user's latest correctness per answered question.
    pub attempts: &'a BTreeMap<QuestionId, bool>,
    /// Model prediction for the user on a question, if covered.
    pub predict: &'a dyn Fn(QuestionId) -> Option<f64>,
    pub topics: &'a [KnowledgeUnit],
    pub params: &'a ScoringParams,
}

fn passes_filter(filter: AnswerFilter, attempt: Option<bool>) -> bool {
    match filter {
        AnswerFilter::All => true,
        AnswerFilter::Unanswered => attempt.is_none(),
        AnswerFilter::Answered => attempt.is_some(),
        AnswerFilter::WrongAnswered => attempt == Some(false),
    }
}

/// Case-insensitive substring match on the markup-free body and choices.
pub fn matches_search(question: &Question, needle: &str) -> bool {
    let needle = needle.trim().to_lowercase();
    if needle.is_empty() {
        return true;
    }
    std::iter::once(&question.body)
        .chain(&question.choices)
        .any(|text| strip_markup(text).to_lowercase().contains(&needle))
}

fn preview(body: &str) -> String {
    let text = strip_markup(body).split_whitespace().collect::<Vec<_>>().join(" ");
    if text.chars().count() <= PREVIEW_CHARS {
        text
    } else {
        let mut s: String = text.chars().take(PREVIEW_CHARS).collect();
        s.push('…');
        s
    }
}

fn descending(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Filter, then search, then sort descending by the chosen key (ties by
/// ascending id), then truncate. Only Active questions are considered.
pub fn recommend(ctx: &RecommendContext<'_>, options: &QueryOptions) -> Vec<QuestionCard> {
    let empty = QuestionStats::default();
    let mut scored: Vec<(Option<f64>, QuestionCard)> = ctx
        .questions
        .values()
        .filter(|q| q.is_visible())
        .filter(|q| passes_filter(options.filter, ctx.attempts.get(&q.question_id).copied()))
        .filter(|q| options.search.as_deref().is_none_or(|s| matches_search(q, s)))
        .map(|q| {
            let stats = ctx.stats.get(&q.question_id).unwrap_or(&empty);
            let attempt = ctx.attempts.get(&q.question_id).copied();
            let theta = personalized_score(q, (ctx.predict)(q.question_id), stats, attempt, ctx.params)
                .map(|s| s.value)
                .unwrap_or(0.0);
            let key = match options.sort {
                SortKey::Difficulty => stats.mean_difficulty,
                SortKey::Quality => stats.mean_quality,
                SortKey::Responses => Some(stats.responses as f64),
                SortKey::Personalized => Some(theta),
            };
            let tags = ctx.topics.iter().filter(|t| q.tags.contains(&t.ku_id)).map(|t| t.label.clone()).collect();
            let card = QuestionCard {
                question_id: q.question_id,
                preview: preview(&q.body),
                tags,
                responses: stats.responses,
                mean_difficulty: stats.mean_difficulty,
                mean_quality: stats.mean_quality,
                personalized: theta,
            };
            (key, card)
        })
        .collect();
    scored.sort_by(|(ka, a), (kb, b)| descending(*ka, *kb).then(a.question_id.cmp(&b.question_id)));
    scored.into_iter().take(options.limit.max(1)).map(|(_, c)| c).collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModerationError {
    #[error("unknown question {0}")]
    UnknownQuestion(QuestionId),
    #[error("question {0} is deleted")]
    AlreadyDeleted(QuestionId),
    #[error("only instructors may moderate questions")]
    Forbidden,
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
}

/// Builds the QuestionFlagged event; replaying it hides the question.
pub fn flag_question(
    user: &UserId,
    question_id: QuestionId,
    question: Option<&Question>,
    reason: &str,
) -> Result<EventKind, ModerationError> {
    let q = question.ok_or(ModerationError::UnknownQuestion(question_id))?;
    if q.status == QuestionStatus::Deleted {
        return Err(ModerationError::AlreadyDeleted(question_id));
    }
    Ok(EventKind::QuestionFlagged { user: user.clone(), question: question_id, reason: reason.to_owned() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action")]
pub enum ModerationRequest {
    Edit { patch: QuestionPatch },
    Delete,
    Restore,
}

/// Builds the ModerationApplied event for an instructor action. Edits are
/// revalidated here; the edited question becomes Active when replayed.
pub fn moderate(
    caller: &User,
    question_id: QuestionId,
    question: Option<&Question>,
    request: ModerationRequest,
) -> Result<EventKind, ModerationError> {
    if !caller.is_instructor() {
        return Err(ModerationError::Forbidden);
    }
    let q = question.ok_or(ModerationError::UnknownQuestion(question_id))?;
    let (action, patch) = match request {
        ModerationRequest::Edit { patch } => {
            q.patched(&patch)?;
            (ModerationAction::Edit, Some(patch))
        }
        ModerationRequest::Delete => (ModerationAction::Delete, None),
        ModerationRequest::Restore => (ModerationAction::Restore, None),
    };
    Ok(EventKind::ModerationApplied { instructor: caller.user_id.clone(), question: question_id, action, patch })
}

/// Question state after a moderation event.
pub fn apply_moderation(question: &Question, action: ModerationAction, patch: Option<&QuestionPatch>) -> Question {
    match action {
        ModerationAction::Edit => {
            let mut q = patch.and_then(|p| question.patched(p).ok()).unwrap_or_else(|| question.clone());
            q.status = QuestionStatus::Active;
            q
        }
        ModerationAction::Delete => Question { status: QuestionStatus::Deleted, ..question.clone() },
        ModerationAction::Restore => Question { status: QuestionStatus::Active, ..question.clone() },
    }
}
