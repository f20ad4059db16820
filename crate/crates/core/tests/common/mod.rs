//! Independent oracles and random inputs shared by the property and
//! acceptance tests. Nothing in here calls the engine code it checks.
#![allow(dead_code)]

pub mod mf;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use ripple_core::knowledge::{fit, knowledge_state, TagMatrix};
use ripple_core::peers::PeerProfile;
use ripple_core::recommender::{AnswerFilter, QueryOptions, SortKey};
use ripple_core::{
    AvailabilityVector, Band, BandThresholds, Event, EventKind, Hyperparameters, KnowledgeUnit, KuId,
    LatestAttemptMatrix, ModerationAction, Question, QuestionId, QuestionPatch, QuestionStats, QuestionStatus, Role,
    Timestamp, UserId, UserRole,
};

const WORDS: [&str; 16] = [
    "cell",
    "Mitochondria",
    "<b>",
    "</b>",
    "&amp;",
    "&lt;",
    "ENZYME",
    "dna",
    "<i>rna</i>",
    "&quot;x&quot;",
    "protein",
    "<br/>",
    "Gene",
    "&nbsp;",
    "lipid",
    "&#39;",
];

pub fn random_text(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn topics(l: u32) -> Vec<KnowledgeUnit> {
    (1..=l).map(|i| KnowledgeUnit { ku_id: KuId(i), label: format!("Topic {i}"), ordinal: i }).collect()
}

pub fn random_question(rng: &mut ChaCha8Rng, id: u64, l: u32) -> Question {
    let n_choices = rng.random_range(2..=6);
    let g = rng.random_range(1..=4.min(l));
    let mut tags = BTreeSet::new();
    while tags.len() < g as usize {
        tags.insert(KuId(rng.random_range(1..=l)));
    }
    let status = *[
        QuestionStatus::Active,
        QuestionStatus::Active,
        QuestionStatus::Active,
        QuestionStatus::Flagged,
        QuestionStatus::Deleted,
    ]
    .choose(rng)
    .unwrap();
    Question {
        question_id: QuestionId(id),
        author_id: UserId::new("author"),
        body: {
            let w = rng.random_range(1..8);
            random_text(rng, w)
        },
        choices: (0..n_choices).map(|_| random_text(rng, 2)).collect(),
        correct_index: rng.random_range(0..n_choices),
        solution: "s".into(),
        tags,
        status,
        created_at: Timestamp(0),
    }
}

/// A question bank with stats, one user's attempts and model predictions.
pub struct Repository {
    pub questions: BTreeMap<QuestionId, Question>,
    pub stats: HashMap<QuestionId, QuestionStats>,
    pub attempts: BTreeMap<QuestionId, bool>,
    pub predictions: HashMap<QuestionId, f64>,
}

fn coarse(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    // Coarse values make sort-key ties common.
    let steps = 8;
    lo + (hi - lo) * rng.random_range(0..=steps) as f64 / steps as f64
}

pub fn random_repository(rng: &mut ChaCha8Rng, m: usize) -> Repository {
    let mut r = Repository {
        questions: BTreeMap::new(),
        stats: HashMap::new(),
        attempts: BTreeMap::new(),
        predictions: HashMap::new(),
    };
    for id in 1..=m as u64 {
        let q = random_question(rng, id, 6);
        let qid = q.question_id;
        r.questions.insert(qid, q);
        if rng.random_bool(0.8) {
            let responses = rng.random_range(0..20);
            r.stats.insert(
                qid,
                QuestionStats {
                    responses,
                    mean_difficulty: rng.random_bool(0.7).then(|| coarse(rng, 1.0, 5.0)),
                    mean_quality: rng.random_bool(0.7).then(|| coarse(rng, 1.0, 5.0)),
                    ..Default::default()
                },
            );
        }
        if rng.random_bool(0.4) {
            r.attempts.insert(qid, rng.random_bool(0.5));
        }
        if rng.random_bool(0.9) {
            r.predictions.insert(qid, coarse(rng, 0.0, 1.0));
        }
    }
    r
}

pub fn random_options(rng: &mut ChaCha8Rng) -> QueryOptions {
    let sort = *[SortKey::Difficulty, SortKey::Quality, SortKey::Responses, SortKey::Personalized].choose(rng).unwrap();
    let filter = *[AnswerFilter::All, AnswerFilter::Unanswered, AnswerFilter::Answered, AnswerFilter::WrongAnswered]
        .choose(rng)
        .unwrap();
    let search = match rng.random_range(0..4) {
        0 => None,
        1 => Some("cell".to_string()),
        2 => Some(["MITO", "rna", "\"x\"", "&", "<", "gene", "b"].choose(rng).unwrap().to_string()),
        _ => Some("nothing-matches".to_string()),
    };
    QueryOptions { sort, filter, search, limit: rng.random_range(1..80) }
}

/// Markup removal by regex: tags become a space, then the six entities are
/// decoded in one pass.
pub fn regex_strip(html: &str) -> String {
    let tags = Regex::new(r"<[^>]*>").unwrap();
    let entities = Regex::new(r"&(lt|gt|quot|#39|nbsp|amp);").unwrap();
    let text = tags.replace_all(html, " ");
    entities
        .replace_all(&text, |c: &regex::Captures| match &c[1] {
            "lt" => "<",
            "gt" => ">",
            "quot" => "\"",
            "#39" => "'",
            "nbsp" => " ",
            _ => "&",
        })
        .into_owned()
}

/// The score written out term by term.
pub fn oracle_theta(prediction: Option<f64>, quality: Option<f64>, attempt: Option<bool>) -> f64 {
    let novelty = match attempt {
        None => 1.0,
        Some(true) => 0.5,
        Some(false) => 0.75,
    };
    let Some(p) = prediction else { return novelty };
    let quality = quality.map_or(0.5, |q| (q - 1.0) / 4.0);
    0.5 * (-(p - 0.65) * (p - 0.65) / 0.08).exp() + 0.3 * quality + 0.2 * novelty
}

/// Linear scan: keep, then pick the best remaining repeatedly.
pub fn oracle_recommend(repo: &Repository, options: &QueryOptions) -> Vec<(QuestionId, f64)> {
    let needle = options.search.as_ref().map(|s| s.trim().to_lowercase());
    let mut kept: Vec<(QuestionId, Option<f64>, f64)> = Vec::new();
    for (id, q) in &repo.questions {
        if q.status != QuestionStatus::Active {
            continue;
        }
        let attempt = repo.attempts.get(id).copied();
        let keep = match options.filter {
            AnswerFilter::All => true,
            AnswerFilter::Unanswered => attempt.is_none(),
            AnswerFilter::Answered => attempt.is_some(),
            AnswerFilter::WrongAnswered => attempt == Some(false),
        };
        if !keep {
            continue;
        }
        if let Some(n) = needle.as_deref().filter(|n| !n.is_empty()) {
            let mut texts = vec![q.body.clone()];
            texts.extend(q.choices.iter().cloned());
            if !texts.iter().any(|t| regex_strip(t).to_lowercase().contains(n)) {
                continue;
            }
        }
        let stats = repo.stats.get(id).cloned().unwrap_or_default();
        let theta = oracle_theta(repo.predictions.get(id).copied(), stats.mean_quality, attempt);
        let key = match options.sort {
            SortKey::Difficulty => stats.mean_difficulty,
            SortKey::Quality => stats.mean_quality,
            SortKey::Responses => Some(stats.responses as f64),
            SortKey::Personalized => Some(theta),
        };
        kept.push((*id, key, theta));
    }
    let mut out = Vec::new();
    while !kept.is_empty() && out.len() < options.limit {
        let mut best = 0;
        for i in 1..kept.len() {
            let better = match (kept[i].1, kept[best].1) {
                (Some(a), Some(b)) => a > b || (a == b && kept[i].0 < kept[best].0),
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => kept[i].0 < kept[best].0,
            };
            if better {
                best = i;
            }
        }
        let (id, _, theta) = kept.remove(best);
        out.push((id, theta));
    }
    out
}

/// A random but reference-valid course history.
pub fn random_course_events(rng: &mut ChaCha8Rng, n: usize) -> Vec<(Timestamp, EventKind)> {
    let l = 4;
    let mut out = vec![
        (Timestamp(0), EventKind::CourseCreated { name: "Random".into(), host: None }),
        (Timestamp(0), EventKind::TopicsDefined { topics: topics(l) }),
        (
            Timestamp(0),
            EventKind::UserJoined { user: "teacher".into(), display_name: "T".into(), role: UserRole::Instructor },
        ),
    ];
    let mut users: Vec<UserId> = vec!["teacher".into()];
    let mut questions: Vec<(QuestionId, usize, usize)> = Vec::new();
    let mut pending: Vec<(u64, UserId)> = Vec::new();
    let mut at = 0u64;
    while out.len() < n {
        at += rng.random_range(0..3) * 1000;
        let t = Timestamp(at);
        let user = users.choose(rng).unwrap().clone();
        let roll = rng.random_range(0..100);
        let kind = if users.len() < 3 || roll < 6 {
            let id = UserId::new(format!("u{:03}", users.len()));
            users.push(id.clone());
            EventKind::UserJoined { user: id, display_name: "x".into(), role: UserRole::Student }
        } else if questions.is_empty() || roll < 16 {
            let mut q = random_question(rng, questions.len() as u64 + 1, l);
            q.status = QuestionStatus::Active;
            q.author_id = user.clone();
            questions.push((q.question_id, q.correct_index, q.choices.len()));
            EventKind::QuestionCreated { author: user, question: q }
        } else if roll < 60 {
            let &(question, ci, nc) = questions.choose(rng).unwrap();
            let chosen_index = rng.random_range(0..nc);
            EventKind::AnswerSubmitted { user, question, chosen_index, correct: chosen_index == ci }
        } else if roll < 68 {
            let question = questions.choose(rng).unwrap().0;
            let stars = rng.random_range(1..=5);
            if rng.random_bool(0.5) {
                EventKind::DifficultyRated { user, question, stars }
            } else {
                EventKind::QualityRated { user, question, stars }
            }
        } else if roll < 71 {
            EventKind::QuestionFlagged { user, question: questions.choose(rng).unwrap().0, reason: "r".into() }
        } else if roll < 74 {
            let action =
                *[ModerationAction::Delete, ModerationAction::Restore, ModerationAction::Edit].choose(rng).unwrap();
            let patch = (action == ModerationAction::Edit)
                .then(|| QuestionPatch { body: Some(random_text(rng, 3)), ..Default::default() });
            EventKind::ModerationApplied {
                instructor: "teacher".into(),
                question: questions.choose(rng).unwrap().0,
                action,
                patch,
            }
        } else if roll < 78 {
            let slots =
                AvailabilityVector::from_slots((0..rng.random_range(0..6)).map(|_| rng.random_range(0..168))).unwrap();
            EventKind::AvailabilitySet { user, slots }
        } else if roll < 82 {
            let role = *Role::ALL.choose(rng).unwrap();
            EventKind::PeerRequestPosted { user, ku: KuId(rng.random_range(1..=l)), role, active: rng.random_bool(0.8) }
        } else if roll < 88 {
            let to = users.choose(rng).unwrap().clone();
            if to == user {
                continue;
            }
            pending.push((out.len() as u64 + 1, to.clone()));
            EventKind::SessionRequested {
                from_user: user,
                to_user: to,
                slot: rng.random_range(0..168),
                kus: vec![KuId(rng.random_range(1..=l))],
                role: *Role::ALL.choose(rng).unwrap(),
            }
        } else if roll < 95 {
            let Some(i) = (!pending.is_empty()).then(|| rng.random_range(0..pending.len())) else { continue };
            let (session_ref, to) = pending.swap_remove(i);
            EventKind::SessionResponded { user: to, session_ref, accepted: rng.random_bool(0.7) }
        } else if roll < 97 {
            EventKind::KnowledgeRefreshed { instructor: "teacher".into() }
        } else {
            EventKind::ConsentRecorded { user, granted: rng.random_bool(0.8) }
        };
        out.push((t, kind));
    }
    out
}

/// Materialise `(at, kind)` pairs as a log with sequence numbers from 1.
pub fn as_events(kinds: Vec<(Timestamp, EventKind)>) -> Vec<Event> {
    kinds
        .into_iter()
        .enumerate()
        .map(|(i, (at, kind))| Event { seq: i as u64 + 1, at, course: "RAND".into(), kind })
        .collect()
}

/// Latest attempt per (user, question) by direct scan.
pub fn brute_latest(events: &[Event]) -> BTreeMap<(UserId, QuestionId), bool> {
    let mut out = BTreeMap::new();
    for e in events {
        if let EventKind::AnswerSubmitted { user, question, correct, .. } = &e.kind {
            out.insert((user.clone(), *question), *correct);
        }
    }
    out
}

pub const CREATE_TIERS: [u64; 3] = [1, 10, 50];
pub const ANSWER_TIERS: [u64; 3] = [10, 100, 500];
pub const SUPPORT_TIERS: [u64; 3] = [1, 5, 20];

/// Per-student recount of the five leaderboard metrics over a whole log, in
/// the order Contributed, Answered, CorrectlyAnswered, Rated, Achievements.
pub fn recount(events: &[Event], refit_every: u64, hyper: &Hyperparameters) -> BTreeMap<UserId, [u64; 5]> {
    let mut students = BTreeSet::new();
    let mut created: HashMap<UserId, u64> = HashMap::new();
    let mut answered: HashMap<UserId, u64> = HashMap::new();
    let mut correct: HashMap<UserId, u64> = HashMap::new();
    let mut rated: HashSet<(UserId, QuestionId)> = HashSet::new();
    let mut sessions: HashMap<u64, (UserId, UserId, Role, bool)> = HashMap::new();
    let mut provided: HashMap<UserId, u64> = HashMap::new();
    let mut competency: HashMap<UserId, BTreeSet<&'static str>> = HashMap::new();
    let mut topic_list: Vec<KnowledgeUnit> = Vec::new();
    let mut answers_since = 0;
    for (i, e) in events.iter().enumerate() {
        let mut refit = false;
        match &e.kind {
            EventKind::UserJoined { user, role: UserRole::Student, .. } => {
                students.insert(user.clone());
            }
            EventKind::TopicsDefined { topics } => topic_list = topics.clone(),
            EventKind::QuestionCreated { author, .. } => *created.entry(author.clone()).or_default() += 1,
            EventKind::AnswerSubmitted { user, correct: c, .. } => {
                *answered.entry(user.clone()).or_default() += 1;
                *correct.entry(user.clone()).or_default() += u64::from(*c);
                answers_since += 1;
                refit = answers_since >= refit_every;
            }
            EventKind::DifficultyRated { user, question, .. } | EventKind::QualityRated { user, question, .. } => {
                rated.insert((user.clone(), *question));
            }
            EventKind::SessionRequested { from_user, to_user, role, .. } => {
                sessions.insert(e.seq, (from_user.clone(), to_user.clone(), *role, false));
            }
            EventKind::SessionResponded { session_ref, accepted, .. } => {
                if let Some(s) = sessions.get_mut(session_ref) {
                    if !s.3 {
                        s.3 = true;
                        if *accepted {
                            let provider = match s.2 {
                                Role::ProvideSupport => Some(s.0.clone()),
                                Role::SeekSupport => Some(s.1.clone()),
                                Role::FindPartner => None,
                            };
                            if let Some(p) = provider {
                                *provided.entry(p).or_default() += 1;
                            }
                        }
                    }
                }
            }
            EventKind::KnowledgeRefreshed { .. } => refit = true,
            _ => {}
        }
        if refit {
            answers_since = 0;
            let prefix = &events[..=i];
            let matrix = LatestAttemptMatrix::from_events(prefix);
            if matrix.entries.is_empty() {
                continue;
            }
            let model = fit(&matrix, hyper).unwrap();
            let by_id: HashMap<QuestionId, &Question> = prefix
                .iter()
                .filter_map(|e| match &e.kind {
                    EventKind::QuestionCreated { question, .. } => Some((question.question_id, question)),
                    _ => None,
                })
                .collect();
            let omega = TagMatrix::build(matrix.questions.iter().map(|q| by_id[q]), &topic_list).unwrap();
            let snap = knowledge_state(&model, &omega, e.at, &BandThresholds::default()).unwrap();
            let observed: BTreeSet<usize> = matrix.entries.keys().map(|(u, _)| *u).collect();
            for row in observed {
                let user = &matrix.users[row];
                if topic_list.is_empty() {
                    continue;
                }
                let order: Vec<usize> = topic_list.iter().map(|t| snap.ku_index(t.ku_id).unwrap()).collect();
                let bands: Vec<Band> = order.iter().map(|&c| snap.bands[row][c]).collect();
                let earned = competency.entry(user.clone()).or_default();
                if bands.contains(&Band::Blue) {
                    earned.insert("bronze");
                }
                if bands.iter().all(|b| *b != Band::Red) {
                    earned.insert("silver");
                }
                if bands.iter().all(|b| *b == Band::Blue) {
                    earned.insert("gold");
                }
            }
        }
    }
    let tiers = |v: u64, t: [u64; 3]| t.iter().filter(|&&x| v >= x).count() as u64;
    students
        .into_iter()
        .map(|u| {
            let c = created.get(&u).copied().unwrap_or(0);
            let a = answered.get(&u).copied().unwrap_or(0);
            let achievements = tiers(c, CREATE_TIERS)
                + tiers(a, ANSWER_TIERS)
                + tiers(provided.get(&u).copied().unwrap_or(0), SUPPORT_TIERS)
                + competency.get(&u).map_or(0, |s| s.len() as u64);
            let r = rated.iter().filter(|(x, _)| *x == u).count() as u64;
            let metrics = [c, a, correct.get(&u).copied().unwrap_or(0), r, achievements];
            (u, metrics)
        })
        .collect()
}

/// Competition ranks by definition: one more than the number of strictly
/// larger values.
pub fn oracle_ranks(values: &BTreeMap<UserId, u64>) -> BTreeMap<UserId, usize> {
    values.iter().map(|(u, v)| (u.clone(), 1 + values.values().filter(|w| *w > v).count())).collect()
}

/// Peer with random availability, one topic state and random role preferences.
pub fn random_peer_profile(rng: &mut ChaCha8Rng, name: &str) -> PeerProfile {
    let mut z = AvailabilityVector::empty();
    for _ in 0..rng.random_range(1..30) {
        z.set(rng.random_range(0..40), true);
    }
    let mut p = PeerProfile { user: name.into(), availability: Some(z), ..Default::default() };
    p.states.insert(KuId(1), rng.random_range(0.0..=1.0));
    p.preference.provide = rng.random_range(0.0..0.5);
    p.preference.seek = rng.random_range(0.0..0.5);
    p
}
