//! In-process test harness: a temporary data directory, a controllable clock
//! and helpers to drive the router without a socket.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use ripple_core::{EventKind, EventStore, KnowledgeUnit, KuId, Timestamp, UserRole};
use ripple_server::{build, ServerConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

pub const COURSE: &str = "BIO101";
pub const START: u64 = 1_767_571_200_000;

pub struct Harness {
    pub dir: tempfile::TempDir,
    pub clock: Arc<AtomicU64>,
    pub app: Router,
    pub seed: u64,
    pub allow_unauthenticated: bool,
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Value,
    pub text: String,
}

impl Harness {
    /// A course with three topics and one instructor, `prof`.
    pub fn new(seed: u64) -> Self {
        Self::with_mode(seed, true)
    }

    pub fn with_mode(seed: u64, allow_unauthenticated: bool) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut store = EventStore::open(dir.path()).unwrap();
        let course = COURSE.into();
        store.create_course(&course).unwrap();
        let at = Timestamp(START);
        store.append(&course, at, EventKind::CourseCreated { name: "Biology".into(), host: None }).unwrap();
        let topics = ["Cells", "Genetics", "Metabolism"]
            .iter()
            .enumerate()
            .map(|(i, l)| KnowledgeUnit { ku_id: KuId(i as u32 + 1), label: l.to_string(), ordinal: i as u32 })
            .collect();
        store.append(&course, at, EventKind::TopicsDefined { topics }).unwrap();
        store
            .append(
                &course,
                at,
                EventKind::UserJoined { user: "prof".into(), display_name: "Prof".into(), role: UserRole::Instructor },
            )
            .unwrap();
        drop(store);
        let clock = Arc::new(AtomicU64::new(START));
        let app = Self::router(dir.path().into(), clock.clone(), seed, allow_unauthenticated);
        Self { dir, clock, app, seed, allow_unauthenticated }
    }

    fn router(data_dir: PathBuf, clock: Arc<AtomicU64>, seed: u64, allow_unauthenticated: bool) -> Router {
        let mut config = ServerConfig::new(data_dir).with_seed(seed);
        config.allow_unauthenticated = allow_unauthenticated;
        // Each reading advances one second, so event times are distinct but reproducible.
        config.clock = Arc::new(move || Timestamp(clock.fetch_add(1000, Ordering::SeqCst)));
        build(config).unwrap()
    }

    /// A fresh server over the same data directory, as after a restart.
    pub fn restart(&mut self) {
        self.app = Self::router(self.dir.path().into(), self.clock.clone(), self.seed, self.allow_unauthenticated);
    }

    pub fn log_path(&self) -> PathBuf {
        EventStore::log_path(self.dir.path(), &COURSE.into())
    }

    pub fn event_count(&self) -> usize {
        std::fs::read_to_string(self.log_path()).unwrap().lines().filter(|l| !l.is_empty()).count()
    }

    pub async fn call(&self, method: Method, path: &str, token: Option<&str>, body: Option<Value>) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let body = serde_json::from_str(&text).unwrap_or(Value::Null);
        Reply { status, body, text }
    }

    pub async fn get(&self, path: &str, token: &str) -> Reply {
        self.call(Method::GET, path, Some(token), None).await
    }

    /// Performs a mutation and checks it succeeded with exactly one new event.
    pub async fn mutate(&self, method: Method, path: &str, token: &str, body: Value) -> Result<Value, String> {
        let before = self.event_count();
        let r = self.call(method.clone(), path, Some(token), Some(body)).await;
        let after = self.event_count();
        if !r.status.is_success() {
            return Err(format!("{method} {path}: status {} body {}", r.status, r.text));
        }
        if after != before + 1 {
            return Err(format!("{method} {path}: appended {} events", after as i64 - before as i64));
        }
        Ok(r.body)
    }

    pub async fn login(&self, user: &str, role: Option<&str>) -> String {
        let mut body = json!({"course": COURSE, "user_id": user});
        if let Some(r) = role {
            body["role"] = json!(r);
        }
        let r = self.call(Method::POST, "/users/login", None, Some(body)).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text);
        r.body["token"].as_str().unwrap().to_owned()
    }
}

/// Every authenticated route with a plausible body.
pub fn authenticated_routes() -> Vec<(Method, String, Option<Value>)> {
    let c = COURSE;
    let q = json!({"body": "b", "choices": ["a", "b"], "correct_index": 0, "solution": "s", "tags": [1]});
    vec![
        (Method::GET, "/users/me".into(), None),
        (Method::PUT, "/users/me/consent".into(), Some(json!({"granted": true}))),
        (Method::GET, format!("/courses/{c}/topics"), None),
        (Method::PUT, format!("/courses/{c}/topics"), Some(json!({"topics": [{"label": "X"}]}))),
        (Method::GET, format!("/courses/{c}/consent-text"), None),
        (Method::PUT, format!("/courses/{c}/consent-text"), Some(json!({"text": "t"}))),
        (Method::POST, "/questions".into(), Some(q)),
        (Method::GET, "/questions?sort=quality&filter=all&search=x&limit=5".into(), None),
        (Method::GET, "/questions/1".into(), None),
        (Method::POST, "/questions/1/answer".into(), Some(json!({"chosen_index": 0}))),
        (Method::POST, "/questions/1/rate".into(), Some(json!({"quality": 4}))),
        (Method::POST, "/questions/1/flag".into(), Some(json!({"reason": "r"}))),
        (Method::GET, "/instructor/flagged".into(), None),
        (Method::POST, "/instructor/questions/1/moderate".into(), Some(json!({"action": "Restore"}))),
        (Method::GET, "/instructor/export.csv".into(), None),
        (Method::GET, "/instructor/progress".into(), None),
        (Method::POST, "/instructor/refresh".into(), Some(json!({}))),
        (Method::GET, "/knowledge/me".into(), None),
        (Method::GET, "/knowledge/cohort?selector=top20".into(), None),
        (Method::GET, "/peers/availability".into(), None),
        (Method::PUT, "/peers/availability".into(), Some(json!({"slots": [1, 2]}))),
        (Method::GET, "/peers/preferences".into(), None),
        (Method::PUT, "/peers/preferences".into(), Some(json!({"role": "SeekSupport", "epsilon": 0.1}))),
        (Method::GET, "/peers/requests".into(), None),
        (Method::POST, "/peers/requests".into(), Some(json!({"ku": 1, "role": "SeekSupport"}))),
        (Method::GET, "/peers/recommendations?k=3".into(), None),
        (Method::GET, "/peers/slot-popularity".into(), None),
        (Method::GET, "/peers/sessions".into(), None),
        (
            Method::POST,
            "/peers/sessions".into(),
            Some(json!({"to_user": "prof", "slot": 1, "kus": [1], "role": "SeekSupport"})),
        ),
        (Method::POST, "/peers/sessions/1/respond".into(), Some(json!({"accept": true}))),
        (Method::GET, "/leaderboard?metric=answered&top_n=5".into(), None),
        (Method::GET, "/profile/badges".into(), None),
        (Method::GET, "/profile/notifications".into(), None),
        (Method::POST, "/profile/notifications/read".into(), Some(json!({}))),
        (Method::GET, "/profile/engagement".into(), None),
        (Method::PUT, "/profile/engagement".into(), Some(json!({"goals": {"answered": 10}}))),
    ]
}

/// Routes reserved for instructors.
pub fn instructor_routes() -> Vec<(Method, String, Option<Value>)> {
    authenticated_routes()
        .into_iter()
        .filter(|(m, p, _)| p.starts_with("/instructor/") || (*m == Method::PUT && p.starts_with("/courses/")))
        .collect()
}

/// Without a token, every authenticated route answers 401 and appends nothing.
pub async fn check_unauthenticated(h: &Harness) -> Result<usize, String> {
    let before = h.event_count();
    let routes = authenticated_routes();
    for (m, p, b) in &routes {
        for token in [None, Some("not-a-token")] {
            let r = h.call(m.clone(), p, token, b.clone()).await;
            if r.status != StatusCode::UNAUTHORIZED || r.body["code"] != "unauthorized" {
                return Err(format!("{m} {p} with {token:?}: {} {}", r.status, r.text));
            }
        }
    }
    if h.event_count() != before {
        return Err("rejected requests appended events".into());
    }
    Ok(routes.len())
}

/// With a student token, every instructor route answers 403 and appends nothing.
pub async fn check_student_forbidden(h: &Harness, student: &str) -> Result<usize, String> {
    let before = h.event_count();
    let routes = instructor_routes();
    for (m, p, b) in &routes {
        let r = h.call(m.clone(), p, Some(student), b.clone()).await;
        if r.status != StatusCode::FORBIDDEN || r.body["code"] != "forbidden" {
            return Err(format!("{m} {p}: {} {}", r.status, r.text));
        }
    }
    if h.event_count() != before {
        return Err("forbidden requests appended events".into());
    }
    Ok(routes.len())
}

pub struct Tokens {
    pub prof: String,
    pub students: Vec<(String, String)>,
}

/// Drives a course through every mutating endpoint, checking each call adds
/// exactly one event. Returns the tokens and the number of mutations made.
pub async fn scripted_course(h: &Harness) -> Result<(Tokens, usize), String> {
    use Method as M;
    let mut n = 0;
    let prof = h.login("prof", None).await;
    let mut students = Vec::new();
    for name in ["ana", "ben", "cai", "dee"] {
        let before = h.event_count();
        let t = h.login(name, Some("Student")).await;
        if h.event_count() != before + 1 {
            return Err(format!("first login of {name} did not append one event"));
        }
        n += 1;
        students.push((name.to_owned(), t));
    }
    let st = |i: usize| students[i].1.as_str();
    h.mutate(M::PUT, &format!("/courses/{COURSE}/consent-text"), &prof, json!({"text": "<p>Data use</p>"})).await?;
    h.mutate(
        M::PUT,
        &format!("/courses/{COURSE}/topics"),
        &prof,
        json!({"topics": [
            {"ku_id": 1, "label": "Cells"}, {"ku_id": 2, "label": "Genetics"},
            {"ku_id": 3, "label": "Metabolism"}, {"label": "Ecology"}
        ]}),
    )
    .await?;
    n += 2;
    for i in 0..8u32 {
        let author = st(i as usize % 4);
        let q = json!({
            "body": format!("<p>Question {i} about <b>cells</b> &amp; genes</p>"),
            "choices": ["A", "B", "C", "D"],
            "correct_index": i % 4,
            "solution": "Because.",
            "tags": [1 + i % 4, 1 + (i + 1) % 4],
        });
        h.mutate(M::POST, "/questions", author, q).await?;
        n += 1;
    }
    // Enough answers to cross one refit boundary.
    for round in 0..4u64 {
        for (s, _) in students.iter().enumerate() {
            for q in 1..=8u64 {
                let chosen = ((q + s as u64 + round) % 4) as usize;
                let correct_claim = !matches!(chosen, 0);
                let body = json!({"chosen_index": chosen, "correct": correct_claim});
                h.mutate(M::POST, &format!("/questions/{q}/answer"), st(s), body).await?;
                n += 1;
            }
        }
    }
    h.mutate(M::POST, "/instructor/refresh", &prof, json!({})).await?;
    for (s, q, field, stars) in [
        (0, 1, "difficulty", 2),
        (1, 1, "difficulty", 4),
        (0, 2, "quality", 5),
        (2, 2, "quality", 3),
        (0, 1, "difficulty", 3),
    ] {
        h.mutate(M::POST, &format!("/questions/{q}/rate"), st(s), json!({field: stars})).await?;
        n += 1;
    }
    h.mutate(M::POST, "/questions/3/flag", st(1), json!({"reason": "typo"})).await?;
    h.mutate(
        M::POST,
        "/instructor/questions/3/moderate",
        &prof,
        json!({"action": "Edit", "patch": {"body": "<p>Fixed</p>"}}),
    )
    .await?;
    h.mutate(M::POST, "/questions/4/flag", st(2), json!({"reason": "wrong"})).await?;
    h.mutate(M::POST, "/instructor/questions/4/moderate", &prof, json!({"action": "Delete"})).await?;
    n += 5;
    h.mutate(M::PUT, "/users/me/consent", st(0), json!({"granted": true})).await?;
    h.mutate(M::PUT, "/users/me/consent", st(3), json!({"granted": false})).await?;
    n += 2;
    for (s, slots) in [(0, vec![10, 11, 12]), (1, vec![11, 12, 30]), (2, vec![12, 40]), (3, vec![50])] {
        h.mutate(M::PUT, "/peers/availability", st(s), json!({"slots": slots})).await?;
        n += 1;
    }
    h.mutate(M::PUT, "/peers/preferences", st(0), json!({"role": "SeekSupport", "epsilon": 0.1})).await?;
    h.mutate(M::POST, "/peers/requests", st(0), json!({"ku": 1, "role": "FindPartner"})).await?;
    h.mutate(M::POST, "/peers/requests", st(1), json!({"ku": 1, "role": "FindPartner"})).await?;
    h.mutate(M::POST, "/peers/requests", st(2), json!({"ku": 2, "role": "SeekSupport"})).await?;
    n += 4;
    let session = h
        .mutate(
            M::POST,
            "/peers/sessions",
            st(0),
            json!({"to_user": "ben", "slot": 11, "kus": [1], "role": "FindPartner"}),
        )
        .await?;
    let sref = session["session_ref"].as_u64().ok_or("session_ref missing")?;
    h.mutate(M::POST, &format!("/peers/sessions/{sref}/respond"), st(1), json!({"accept": true})).await?;
    h.mutate(M::POST, "/profile/notifications/read", st(0), json!({})).await?;
    h.mutate(M::PUT, "/profile/engagement", st(0), json!({"goals": {"answered": 50, "Contributed": 5}})).await?;
    n += 4;
    Ok((Tokens { prof, students }, n))
}

/// GET endpoints whose responses must survive a restart unchanged.
pub fn snapshot_paths() -> Vec<String> {
    vec![
        "/users/me".into(),
        format!("/courses/{COURSE}/topics"),
        format!("/courses/{COURSE}/consent-text"),
        "/questions".into(),
        "/questions?sort=difficulty&filter=answered".into(),
        "/questions?sort=quality&search=cells&limit=3".into(),
        "/questions?sort=responses&filter=wrong".into(),
        "/questions/1".into(),
        "/questions/4".into(),
        "/knowledge/me".into(),
        "/knowledge/cohort?selector=top20".into(),
        "/knowledge/cohort?selector=all".into(),
        "/peers/availability".into(),
        "/peers/preferences".into(),
        "/peers/requests".into(),
        "/peers/recommendations?k=5".into(),
        "/peers/slot-popularity".into(),
        "/peers/sessions".into(),
        "/leaderboard?metric=answered".into(),
        "/leaderboard?metric=achievements&top_n=3".into(),
        "/leaderboard?metric=rated".into(),
        "/profile/badges".into(),
        "/profile/notifications".into(),
        "/profile/engagement".into(),
        "/instructor/flagged".into(),
        "/instructor/progress".into(),
        "/instructor/export.csv".into(),
    ]
}

/// Every snapshot GET for every user, as raw text, with the clock frozen.
pub async fn capture(h: &Harness, tokens: &[(String, String)]) -> Vec<(String, String, u16, String)> {
    let frozen = h.clock.load(Ordering::SeqCst);
    let mut out = Vec::new();
    for (user, token) in tokens {
        for p in snapshot_paths() {
            h.clock.store(frozen, Ordering::SeqCst);
            let r = h.get(&p, token).await;
            out.push((user.clone(), p, r.status.as_u16(), r.text));
        }
    }
    h.clock.store(frozen, Ordering::SeqCst);
    out
}

/// Runs the script, restarts the server over the same log and compares every
/// GET response byte for byte.
pub async fn check_replay_determinism(seed: u64) -> Result<usize, String> {
    let mut h = Harness::new(seed);
    let (tokens, _) = scripted_course(&h).await?;
    let mut all = vec![("prof".to_owned(), tokens.prof.clone())];
    all.extend(tokens.students.iter().cloned());
    let before = capture(&h, &all).await;
    let events = h.event_count();
    h.restart();
    let mut relogged = Vec::new();
    for (user, _) in &all {
        relogged.push((user.clone(), h.login(user, None).await));
    }
    if h.event_count() != events {
        return Err("logging in again appended events".into());
    }
    let after = capture(&h, &relogged).await;
    for (b, a) in before.iter().zip(&after) {
        if b != a {
            return Err(format!("{} {} differs after replay:\n{}\nvs\n{}", b.0, b.1, b.3, a.3));
        }
    }
    Ok(before.len())
}
