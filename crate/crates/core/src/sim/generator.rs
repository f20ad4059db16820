use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    AvailabilityVector, CourseId, Event, EventKind, KnowledgeUnit, KuId, Question, QuestionId, QuestionStatus, Role,
    Timestamp, UserId, UserRole,
};
use crate::event_log::{CourseLog, EventStore, LogError};

/// Monday 2026-01-05 00:00 UTC.
pub const SIM_EPOCH: Timestamp = Timestamp(1_767_571_200_000);

pub const INSTRUCTOR: &str = "instructor";

pub fn student_id(n: usize) -> UserId {
    UserId::new(format!("s{n:04}"))
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthParams {
    pub ability_mean: f64,
    /// Spread of general ability across students.
    pub ability_sd: f64,
    /// Spread of per-topic deviations around a student's general ability.
    pub topic_sd: f64,
    pub difficulty_mean: f64,
    pub difficulty_sd: f64,
    pub guess: f64,
}

impl Default for GroundTruthParams {
    fn default() -> Self {
        Self {
            ability_mean: 0.0,
            ability_sd: 1.5,
            topic_sd: 0.5,
            difficulty_mean: 0.5,
            difficulty_sd: 1.5,
            guess: 0.25,
        }
    }
}

/// Item-response ground truth: students have an ability per topic, questions
/// a difficulty, and a correct answer has probability
/// `guess + (1 - guess) * logistic(ability - difficulty)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthModel {
    /// `ability[student][topic]`
    pub ability: Vec<Vec<f64>>,
    pub difficulty: Vec<f64>,
    /// Topic indices each question is tagged with.
    pub tags: Vec<Vec<usize>>,
    pub guess: f64,
    pub rng_seed: u64,
}

impl GroundTruthModel {
    pub fn sample(rng: &mut ChaCha8Rng, n: usize, m: usize, l: usize, params: &GroundTruthParams, seed: u64) -> Self {
        let general = Normal::new(params.ability_mean, params.ability_sd).expect("finite sd");
        let deviation = Normal::new(0.0, params.topic_sd).expect("finite sd");
        let diff = Normal::new(params.difficulty_mean, params.difficulty_sd).expect("finite sd");
        let ability = (0..n)
            .map(|_| {
                let g = general.sample(rng);
                (0..l).map(|_| g + deviation.sample(rng)).collect()
            })
            .collect();
        let difficulty = (0..m).map(|_| diff.sample(rng)).collect();
        let tags = (0..m)
            .map(|_| {
                let g = if l > 1 && rng.random_bool(0.3) { 2 } else { 1 };
                let mut t = index::sample(rng, l, g).into_vec();
                t.sort_unstable();
                t
            })
            .collect();
        Self { ability, difficulty, tags, guess: params.guess, rng_seed: seed }
    }

    pub fn p_correct(&self, student: usize, question: usize) -> f64 {
        let tags = &self.tags[question];
        let a = tags.iter().map(|&t| self.ability[student][t]).sum::<f64>() / tags.len() as f64;
        self.guess + (1.0 - self.guess) * logistic(a - self.difficulty[question])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub course: CourseId,
    pub n_students: usize,
    pub n_questions: usize,
    pub n_topics: usize,
    pub answers_per_student: usize,
    pub holdout_fraction: f64,
    /// Also emit availability, preferences and peer requests.
    pub peer_activity: bool,
    pub truth: GroundTruthParams,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            course: CourseId::new("SIM101"),
            n_students: 200,
            n_questions: 100,
            n_topics: 5,
            answers_per_student: 40,
            holdout_fraction: 0.2,
            peer_activity: true,
            truth: GroundTruthParams::default(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("{0} must be at least 1")]
    Zero(&'static str),
    #[error("answers per student ({answers}) exceed the number of questions ({questions})")]
    TooManyAnswers { answers: usize, questions: usize },
    #[error("holdout fraction {0} outside [0, 1)")]
    HoldoutFraction(f64),
}

impl CohortSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        for (name, v) in [
            ("students", self.n_students),
            ("questions", self.n_questions),
            ("topics", self.n_topics),
            ("answers per student", self.answers_per_student),
        ] {
            if v == 0 {
                return Err(SpecError::Zero(name));
            }
        }
        if self.answers_per_student > self.n_questions {
            return Err(SpecError::TooManyAnswers { answers: self.answers_per_student, questions: self.n_questions });
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(SpecError::HoldoutFraction(self.holdout_fraction));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedCohort {
    pub events: Vec<Event>,
    /// Answer events whose (user, question) pairs are held out of training.
    pub holdout: Vec<Event>,
    pub truth: GroundTruthModel,
}

impl GeneratedCohort {
    pub fn holdout_pairs(&self) -> HashSet<(UserId, QuestionId)> {
        holdout_pairs(&self.holdout)
    }
}

pub fn holdout_pairs(holdout: &[Event]) -> HashSet<(UserId, QuestionId)> {
    holdout
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::AnswerSubmitted { user, question, .. } => Some((user.clone(), *question)),
            _ => None,
        })
        .collect()
}

struct Builder {
    course: CourseId,
    events: Vec<Event>,
    clock: u64,
}

impl Builder {
    fn push(&mut self, kind: EventKind) -> &Event {
        self.clock += 1000;
        let seq = self.events.len() as u64 + 1;
        self.events.push(Event { seq, at: Timestamp(SIM_EPOCH.0 + self.clock), course: self.course.clone(), kind });
        self.events.last().expect("just pushed")
    }
}

/// Deterministic synthetic course for a fixed spec.
///
/// Every answer is in `events`; a stratified `holdout_fraction` of each
/// student's pairs is also listed in `holdout`. Students answer in rounds so
/// that periodic refits see a growing matrix.
pub fn generate_cohort(spec: &CohortSpec) -> Result<GeneratedCohort, SpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, m, l) = (spec.n_students, spec.n_questions, spec.n_topics);
    let truth = GroundTruthModel::sample(&mut rng, n, m, l, &spec.truth, spec.seed);
    let mut b = Builder { course: spec.course.clone(), events: Vec::new(), clock: 0 };

    b.push(EventKind::CourseCreated { name: format!("Synthetic course {}", spec.course), host: None });
    let topics: Vec<KnowledgeUnit> = (0..l)
        .map(|t| KnowledgeUnit { ku_id: KuId(t as u32 + 1), label: format!("Topic {}", t + 1), ordinal: t as u32 })
        .collect();
    b.push(EventKind::TopicsDefined { topics });
    b.push(EventKind::UserJoined {
        user: INSTRUCTOR.into(),
        display_name: "Instructor".into(),
        role: UserRole::Instructor,
    });
    for s in 0..n {
        b.push(EventKind::UserJoined {
            user: student_id(s),
            display_name: format!("Student {s}"),
            role: UserRole::Student,
        });
    }
    let mut correct_index = Vec::with_capacity(m);
    for q in 0..m {
        let ci = rng.random_range(0..4);
        correct_index.push(ci);
        let at = Timestamp(SIM_EPOCH.0 + b.clock + 1000);
        let question = Question {
            question_id: QuestionId(q as u64 + 1),
            author_id: INSTRUCTOR.into(),
            body: format!("Synthetic question {}", q + 1),
            choices: (0..4).map(|c| format!("Option {}", (b'A' + c) as char)).collect(),
            correct_index: ci,
            solution: format!("Option {} is correct.", (b'A' + ci as u8) as char),
            tags: truth.tags[q].iter().map(|&t| KuId(t as u32 + 1)).collect(),
            status: QuestionStatus::Active,
            created_at: at,
        };
        b.push(EventKind::QuestionCreated { author: INSTRUCTOR.into(), question });
    }

    let a = spec.answers_per_student;
    let picks: Vec<Vec<usize>> = (0..n).map(|_| index::sample(&mut rng, m, a).into_vec()).collect();
    let held = ((a as f64) * spec.holdout_fraction).round() as usize;
    let held_out: Vec<HashSet<usize>> = picks
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.shuffle(&mut rng);
            p.into_iter().take(held).collect()
        })
        .collect();
    let mut holdout = Vec::new();
    // Round-major so students interleave in the log.
    #[allow(clippy::needless_range_loop)]
    for round in 0..a {
        for s in 0..n {
            let q = picks[s][round];
            let correct = rng.random_bool(truth.p_correct(s, q));
            let chosen_index = if correct {
                correct_index[q]
            } else {
                let wrong: Vec<usize> = (0..4).filter(|&c| c != correct_index[q]).collect();
                *wrong.choose(&mut rng).expect("three wrong choices")
            };
            let e = b.push(EventKind::AnswerSubmitted {
                user: student_id(s),
                question: QuestionId(q as u64 + 1),
                chosen_index,
                correct,
            });
            if held_out[s].contains(&q) {
                holdout.push(e.clone());
            }
        }
    }

    if spec.peer_activity {
        for s in 0..n {
            let user = student_id(s);
            let mut slots = AvailabilityVector::empty();
            for _ in 0..rng.random_range(0..12) {
                slots.set(rng.random_range(0..crate::domain::SLOTS_PER_WEEK), true);
            }
            b.push(EventKind::AvailabilitySet { user: user.clone(), slots });
            if rng.random_bool(0.2) {
                let role = *Role::ALL.choose(&mut rng).expect("three roles");
                let epsilon = (rng.random_range(0.0..0.4f64) * 100.0).round() / 100.0;
                b.push(EventKind::PreferenceSet { user: user.clone(), role, epsilon });
            }
            for _ in 0..rng.random_range(0..3) {
                let ku = KuId(rng.random_range(1..=l as u32));
                let role = *Role::ALL.choose(&mut rng).expect("three roles");
                b.push(EventKind::PeerRequestPosted { user: user.clone(), ku, role, active: true });
            }
        }
        b.push(EventKind::KnowledgeRefreshed { instructor: INSTRUCTOR.into() });
    }

    Ok(GeneratedCohort { events: b.events, holdout, truth })
}

pub fn holdout_path(dir: &Path, course: &CourseId) -> PathBuf {
    dir.join(format!("{course}.holdout.jsonl"))
}

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Writes `<course>.jsonl` and `<course>.holdout.jsonl` into `dir`.
pub fn write_cohort(dir: &Path, spec: &CohortSpec) -> Result<(PathBuf, PathBuf, GeneratedCohort), GenerateError> {
    let cohort = generate_cohort(spec)?;
    fs::create_dir_all(dir).map_err(|source| GenerateError::Io { path: dir.to_owned(), source })?;
    let log_path = EventStore::log_path(dir, &spec.course);
    let mut log = CourseLog::create(&log_path, spec.course.clone())?;
    log.set_sync(false);
    for e in &cohort.events {
        let stored = log.append(e.at, e.kind.clone())?;
        debug_assert_eq!(stored, e);
    }
    let hpath = holdout_path(dir, &spec.course);
    let io = |source| GenerateError::Io { path: hpath.clone(), source };
    let mut out = std::io::BufWriter::new(fs::File::create(&hpath).map_err(io)?);
    for e in &cohort.holdout {
        let line = serde_json::to_string(e).expect("events serialise");
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)?;
    Ok((log_path, hpath, cohort))
}
