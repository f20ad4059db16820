use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::course::{CourseState, EngineConfig};
use crate::domain::{CourseId, Event, EventKind, QuestionId, UserId};
use crate::event_log::{CourseLog, LatestAttemptMatrix, LogError};
use crate::knowledge::{fit, Hyperparameters, KnowledgeError};
use crate::peers::recommend_peers;

use super::generator::holdout_pairs;
use super::oracle::{brute_force_recommendations, constraint_violations, provide_violations};

/// Largest cohort the brute-force oracle is run against.
pub const ORACLE_MAX_USERS: usize = 30;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub holdout_accuracy: Option<f64>,
    pub auc: Option<f64>,
    pub majority_baseline: Option<f64>,
    pub training_answers: Option<usize>,
    pub holdout_size: Option<usize>,
    pub users_evaluated: Option<usize>,
    pub recommendations: Option<usize>,
    /// `Some(true)` when the brute-force oracle was run and agreed.
    pub oracle_agreement: Option<bool>,
    pub violations: usize,
    pub runtime_seconds: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum EvaluateError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("holdout is empty")]
    EmptyHoldout,
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}

/// Area under the ROC curve as the normalised Mann-Whitney statistic;
/// tied scores count one half. `None` when either class is absent.
pub fn auc(scored: &[(f64, bool)]) -> Option<f64> {
    let mut v = scored.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = v.iter().filter(|s| s.1).count();
    let negatives = v.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j].0 == v[i].0 {
            j += 1;
        }
        // Ranks i+1..=j share their mean.
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += mean_rank * v[i..j].iter().filter(|s| s.1).count() as f64;
        i = j;
    }
    let p = positives as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

fn course_of(path: &Path) -> CourseId {
    CourseId::new(path.file_stem().and_then(|s| s.to_str()).unwrap_or_default())
}

pub fn open_log(path: &Path) -> Result<CourseLog, EvaluateError> {
    if !path.exists() {
        return Err(EvaluateError::FileNotFound(path.to_owned()));
    }
    Ok(CourseLog::open(path, course_of(path))?)
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, EvaluateError> {
    let text = fs::read_to_string(path).map_err(|_| EvaluateError::FileNotFound(path.to_owned()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvaluateError::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Fits on every answer whose pair is not held out and scores the latest
/// held-out outcome of each pair.
pub fn evaluate_kt_events(
    events: &[Event],
    holdout: &[Event],
    hyper: &Hyperparameters,
) -> Result<EvaluationReport, EvaluateError> {
    let start = Instant::now();
    let held: HashSet<(UserId, QuestionId)> = holdout_pairs(holdout);
    if held.is_empty() {
        return Err(EvaluateError::EmptyHoldout);
    }
    let training: Vec<&Event> = events
        .iter()
        .filter(|e| match &e.kind {
            EventKind::AnswerSubmitted { user, question, .. } => !held.contains(&(user.clone(), *question)),
            _ => true,
        })
        .collect();
    let matrix = LatestAttemptMatrix::from_events(training.iter().copied());
    let model = fit(&matrix, hyper)?;
    let truth = LatestAttemptMatrix::from_events(holdout);
    let mut scored = Vec::with_capacity(truth.entries.len());
    for (&(u, q), attempt) in &truth.entries {
        let (user, question) = (&truth.users[u], truth.questions[q]);
        let p = match (matrix.user_index(user), matrix.question_index(question)) {
            (Some(i), Some(j)) => model.predict(i, j)?,
            _ => model.global_mean,
        };
        scored.push((p, attempt.correct));
    }
    let n = scored.len() as f64;
    let positives = scored.iter().filter(|s| s.1).count() as f64;
    let accuracy = scored.iter().filter(|(p, y)| (*p >= 0.5) == *y).count() as f64 / n;
    Ok(EvaluationReport {
        holdout_accuracy: Some(accuracy),
        auc: auc(&scored),
        majority_baseline: Some(positives.max(n - positives) / n),
        training_answers: Some(matrix.entries.len()),
        holdout_size: Some(scored.len()),
        runtime_seconds: start.elapsed().as_secs_f64(),
        ..Default::default()
    })
}

pub fn evaluate_kt(log: &Path, holdout: &Path, hyper: &Hyperparameters) -> Result<EvaluationReport, EvaluateError> {
    let start = Instant::now();
    let log = open_log(log)?;
    if !holdout.exists() {
        return Err(EvaluateError::FileNotFound(holdout.to_owned()));
    }
    let held = read_events(holdout)?;
    let mut report = evaluate_kt_events(log.events(), &held, hyper)?;
    report.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Runs the matcher for every user with availability and a request, checks
/// the output constraints, and compares with the brute-force oracle when the
/// cohort is small enough.
pub fn evaluate_peers_state(state: &CourseState, k: usize) -> EvaluationReport {
    let start = Instant::now();
    let cohort = state.peer_cohort();
    let n_users = cohort.profiles().count();
    let run_oracle = n_users <= ORACLE_MAX_USERS;
    let mut violations = provide_violations(&cohort);
    let mut agreement = true;
    let mut evaluated = 0;
    let mut total = 0;
    let users: Vec<UserId> = cohort
        .profiles()
        .filter(|p| p.availability.is_some() && !p.requests.is_empty())
        .map(|p| p.user.clone())
        .collect();
    for user in &users {
        let recs = recommend_peers(&cohort, user, k).expect("users filtered on availability");
        evaluated += 1;
        total += recs.len();
        violations += constraint_violations(&cohort, user, &recs);
        if run_oracle {
            agreement &= same_recommendations(&recs, &brute_force_recommendations(&cohort, user, k));
        }
    }
    EvaluationReport {
        users_evaluated: Some(evaluated),
        recommendations: Some(total),
        oracle_agreement: run_oracle.then_some(agreement),
        violations,
        runtime_seconds: start.elapsed().as_secs_f64(),
        ..Default::default()
    }
}

/// Same users, order, topics, slots and directions, scores within 1e-9.
pub fn same_recommendations(a: &[crate::peers::PeerRecommendation], b: &[crate::peers::PeerRecommendation]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.other_user == y.other_user
                && (x.score - y.score).abs() <= 1e-9
                && x.matched_kus == y.matched_kus
                && x.suggested_slot == y.suggested_slot
                && x.direction == y.direction
        })
}

pub fn evaluate_peers(log: &Path, k: usize, config: &EngineConfig) -> Result<EvaluationReport, EvaluateError> {
    let start = Instant::now();
    let log = open_log(log)?;
    let state = CourseState::replay(log.course_id().clone(), config.clone(), log.events());
    let mut report = evaluate_peers_state(&state, k);
    report.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}
