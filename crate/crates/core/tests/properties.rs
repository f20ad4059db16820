mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ripple_core::gamification::{award_badges, CompetencyCounts, Metric, UserActivity, BADGES};
use ripple_core::peers::{reciprocal_score, MatchParams};
use ripple_core::recommender::{recommend, RecommendContext, ScoringParams};
use ripple_core::sim::{brute_force_recommendations, random_peer_cohort, same_recommendations};
use ripple_core::{
    recommend_peers, tag_weights, CourseLog, CourseState, EngineConfig, EventKind, KuId, Role, Timestamp,
};

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn tag_rows_are_uniform_over_tags(seed in any::<u64>(), l in 1u32..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_question(&mut rng, 1, l);
        let row = tag_weights(&q, &topics(l)).unwrap();
        let g = q.tags.len() as f64;
        prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(row.iter().filter(|w| **w > 0.0).count(), q.tags.len());
        prop_assert!(row.iter().all(|w| *w == 0.0 || *w == 1.0 / g));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn reciprocal_score_is_symmetric_under_reversal(seed in any::<u64>(), ra in 0usize..3, rb in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_peer_profile(&mut rng, "a");
        let b = random_peer_profile(&mut rng, "b");
        let roles = (Role::ALL[ra], Role::ALL[rb]);
        let params = MatchParams::default();
        let forward = reciprocal_score(&a, &b, KuId(1), roles, &params);
        let backward = reciprocal_score(&b, &a, KuId(1), (roles.1, roles.0), &params);
        match (forward, backward) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12, "{x} vs {y}"),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "one direction failed: {other:?}"),
        }
    }
}

#[test]
fn recommend_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let repo = random_repository(&mut rng, 500);
    let topics = topics(6);
    let params = ScoringParams::default();
    let predict = |q| repo.predictions.get(&q).copied();
    let ctx = RecommendContext {
        questions: &repo.questions,
        stats: &repo.stats,
        attempts: &repo.attempts,
        predict: &predict,
        topics: &topics,
        params: &params,
    };
    for _ in 0..20 {
        let options = random_options(&mut rng);
        let got: Vec<_> = recommend(&ctx, &options).into_iter().map(|c| (c.question_id, c.personalized)).collect();
        let want = oracle_recommend(&repo, &options);
        assert_eq!(got.len(), want.len(), "{options:?}");
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.0, w.0, "{options:?}");
            assert!((g.1 - w.1).abs() < 1e-9, "{options:?}");
        }
    }
}

#[test]
fn peer_matching_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.random_range(2..=30);
        let cohort = random_peer_cohort(&mut rng, n, 4);
        for p in cohort.profiles() {
            let expected = brute_force_recommendations(&cohort, &p.user, 10);
            match recommend_peers(&cohort, &p.user, 10) {
                Ok(got) => assert!(same_recommendations(&got, &expected), "user {}", p.user),
                Err(_) => assert!(p.availability.is_none() && expected.is_empty()),
            }
        }
    }
}

#[test]
fn log_round_trip_is_byte_faithful() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let events = as_events(random_course_events(&mut rng, 10_000));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("RAND.jsonl");
    let mut log = CourseLog::create(&path, "RAND".into()).unwrap();
    log.set_sync(false);
    for e in &events {
        let stored = log.append(e.at, e.kind.clone()).unwrap();
        assert_eq!(stored, e);
    }
    drop(log);
    let mut expected = String::new();
    for e in &events {
        expected.push_str(&serde_json::to_string(e).unwrap());
        expected.push('\n');
    }
    assert_eq!(std::fs::read_to_string(&path).unwrap(), expected);
    let reopened = CourseLog::open(&path, "RAND".into()).unwrap();
    assert_eq!(reopened.events(), &events[..]);

    for cut in [0, 2_000, 7_777, 10_000] {
        let prefix = &events[..cut];
        let up_to = prefix.last().map_or(Timestamp(0), |e| e.at);
        // Cut at a timestamp boundary so the prefix is exactly what replay returns.
        let prefix = &events[..events.partition_point(|e| e.at <= up_to)];
        let m = reopened.latest_attempts(Some(up_to));
        let got: BTreeMap<_, _> =
            m.entries.iter().map(|(&(u, q), a)| ((m.users[u].clone(), m.questions[q]), a.correct)).collect();
        assert_eq!(got, brute_latest(prefix), "cut {cut}");
    }
}

#[test]
fn removing_a_tagged_topic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut log = CourseLog::create(dir.path().join("T.jsonl"), "T".into()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (at, kind) in random_course_events(&mut rng, 3) {
        log.append(at, kind).unwrap();
    }
    let mut q = random_question(&mut rng, 1, 4);
    q.tags = [KuId(2)].into();
    log.append(Timestamp(1), EventKind::QuestionCreated { author: "teacher".into(), question: q }).unwrap();
    let without_two: Vec<_> = topics(4).into_iter().filter(|t| t.ku_id != KuId(2)).collect();
    assert!(log.append(Timestamp(2), EventKind::TopicsDefined { topics: without_two }).is_err());
    let without_three: Vec<_> = topics(4).into_iter().filter(|t| t.ku_id != KuId(3)).collect();
    assert!(log.append(Timestamp(2), EventKind::TopicsDefined { topics: without_three }).is_ok());
}

#[test]
fn leaderboards_match_full_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let config = EngineConfig::default();
    for _ in 0..50 {
        let n = rng.random_range(50..400);
        let events = as_events(random_course_events(&mut rng, n));
        let state = CourseState::replay("RAND".into(), config.clone(), &events);
        let counts = recount(&events, config.refit_every, &config.hyper);
        for (i, metric) in Metric::ALL.into_iter().enumerate() {
            let values: BTreeMap<_, _> = counts.iter().map(|(u, c)| (u.clone(), c[i])).collect();
            let ranks = oracle_ranks(&values);
            let rows = state.leaderboard(metric, usize::MAX);
            assert_eq!(rows.len(), values.len());
            for row in &rows {
                assert_eq!(row.value, values[&row.user], "{metric:?} {}", row.user);
                assert_eq!(row.rank, ranks[&row.user], "{metric:?} {}", row.user);
            }
            assert!(rows.windows(2).all(|w| w[0].value >= w[1].value));
        }
    }
}

#[test]
fn earned_badges_are_never_revoked() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..10 {
        let events = as_events(random_course_events(&mut rng, 600));
        let mut state = CourseState::new("RAND".into(), EngineConfig::default());
        let mut seen: HashMap<_, BTreeSet<&'static str>> = HashMap::new();
        for e in &events {
            state.apply(e);
            for u in state.users().map(|u| u.user_id.clone()).collect::<Vec<_>>() {
                let now: BTreeSet<_> = state.earned_badges(&u).map(|(id, _)| id).collect();
                let before = seen.entry(u).or_default();
                assert!(before.is_subset(&now));
                *before = now;
            }
        }
    }
}

proptest! {
    #[test]
    fn more_activity_never_unearns(
        base in proptest::array::uniform5(0u64..600),
        extra in proptest::array::uniform5(0u64..100),
        topics in 0u64..8,
        blue in 0u64..8,
        yellow in 0u64..8,
    ) {
        let blue = blue.min(topics);
        let yellow = yellow.min(topics).max(blue);
        let before = UserActivity { created: base[0], answered: base[1], correct: base[2].min(base[1]), rated: base[3], provider_sessions: base[4] };
        let after = UserActivity {
            created: before.created + extra[0],
            answered: before.answered + extra[1],
            correct: before.correct + extra[2].min(extra[1]),
            rated: before.rated + extra[3],
            provider_sessions: before.provider_sessions + extra[4],
        };
        let c = CompetencyCounts { topics, yellow_or_better: yellow, blue };
        let earned_before: BTreeSet<_> = award_badges(&before, &c, |_| false).iter().map(|b| b.id).collect();
        let earned_after: BTreeSet<_> = award_badges(&after, &c, |_| false).iter().map(|b| b.id).collect();
        prop_assert!(earned_before.is_subset(&earned_after));
        prop_assert!(earned_after.len() <= BADGES.len());
    }
}
