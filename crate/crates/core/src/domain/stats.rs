use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Event, EventKind, Question, Timestamp, UserId};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuestionStats {
    pub responses: u64,
    /// Defined only when `responses > 0`.
    pub correct_rate: Option<f64>,
    pub mean_difficulty: Option<f64>,
    pub mean_quality: Option<f64>,
    pub flags: u64,
    /// Answer count per choice, for the peer distribution shown after answering.
    pub choice_counts: Vec<u64>,
}

/// Summarises the answer, rating and flag events of one question.
///
/// Every answer counts. Ratings keep only each user's latest, ordered by
/// `(at, seq)`. Events about other questions are ignored.
pub fn aggregate_stats<'a, I>(question: &Question, events: I) -> QuestionStats
where
    I: IntoIterator<Item = &'a Event>,
{
    let mut stats = QuestionStats { choice_counts: vec![0; question.choices.len()], ..Default::default() };
    let mut correct = 0u64;
    let mut difficulty: HashMap<&UserId, ((Timestamp, u64), u8)> = HashMap::new();
    let mut quality: HashMap<&UserId, ((Timestamp, u64), u8)> = HashMap::new();

    fn keep_latest<'u>(
        map: &mut HashMap<&'u UserId, ((Timestamp, u64), u8)>,
        user: &'u UserId,
        key: (Timestamp, u64),
        stars: u8,
    ) {
        let slot = map.entry(user).or_insert((key, stars));
        if key >= slot.0 {
            *slot = (key, stars);
        }
    }

    for e in events {
        if e.kind.question() != Some(question.question_id) {
            continue;
        }
        let key = (e.at, e.seq);
        match &e.kind {
            EventKind::AnswerSubmitted { chosen_index, correct: ok, .. } => {
                stats.responses += 1;
                if *ok {
                    correct += 1;
                }
                if let Some(c) = stats.choice_counts.get_mut(*chosen_index) {
                    *c += 1;
                }
            }
            EventKind::DifficultyRated { user, stars, .. } => keep_latest(&mut difficulty, user, key, *stars),
            EventKind::QualityRated { user, stars, .. } => keep_latest(&mut quality, user, key, *stars),
            EventKind::QuestionFlagged { .. } => stats.flags += 1,
            _ => {}
        }
    }

    let mean = |m: &HashMap<&UserId, ((Timestamp, u64), u8)>| {
        (!m.is_empty()).then(|| m.values().map(|(_, s)| f64::from(*s)).sum::<f64>() / m.len() as f64)
    };
    if stats.responses > 0 {
        stats.correct_rate = Some(correct as f64 / stats.responses as f64);
    }
    stats.mean_difficulty = mean(&difficulty);
    stats.mean_quality = mean(&quality);
    stats
}
