use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ripple_core::{CourseId, CourseLog, CourseState, Event, EventKind, EventStore, LogError, Timestamp, UserId};
use serde::{Deserialize, Serialize};

use crate::config::ServerConfig;
use crate::error::ApiError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    pub token: String,
    pub user_id: UserId,
    pub course_id: CourseId,
    pub issued_at: Timestamp,
}

struct Writer {
    log: CourseLog,
    state: CourseState,
}

/// One course: a single writer over the log and its reducer, and the latest
/// published snapshot for readers.
pub struct CourseHandle {
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<CourseState>>,
}

impl CourseHandle {
    fn new(log: CourseLog, config: &ServerConfig) -> Self {
        let state = CourseState::replay(log.course_id().clone(), config.engine.clone(), log.events());
        let snapshot = RwLock::new(Arc::new(state.clone()));
        Self { writer: Mutex::new(Writer { log, state }), snapshot }
    }

    pub fn snapshot(&self) -> Arc<CourseState> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn export_csv(&self) -> String {
        self.writer.lock().expect("writer lock").log.export_csv()
    }
}

#[derive(Default)]
struct Tokens {
    by_token: HashMap<String, SessionToken>,
    by_user: HashMap<(CourseId, UserId), String>,
}

pub struct AppState {
    pub config: ServerConfig,
    courses: BTreeMap<CourseId, CourseHandle>,
    tokens: RwLock<Tokens>,
    rng: Mutex<ChaCha8Rng>,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    /// Loads every course log under the data directory.
    pub fn open(config: ServerConfig) -> Result<SharedState, LogError> {
        let store = EventStore::open(&config.data_dir)?;
        let courses = store.into_logs().into_iter().map(|(id, log)| (id, CourseHandle::new(log, &config))).collect();
        let rng = Mutex::new(ChaCha8Rng::seed_from_u64(config.rng_seed));
        Ok(Arc::new(Self { config, courses, tokens: RwLock::default(), rng }))
    }

    pub fn now(&self) -> Timestamp {
        (self.config.clock)()
    }

    pub fn course(&self, id: &CourseId) -> Result<&CourseHandle, ApiError> {
        self.courses.get(id).ok_or_else(|| ApiError::not_found(format!("unknown course {id}")))
    }

    pub fn courses(&self) -> impl Iterator<Item = &CourseId> {
        self.courses.keys()
    }

    pub fn random_hex(&self, bytes: usize) -> String {
        let mut rng = self.rng.lock().expect("rng lock");
        (0..bytes).map(|_| format!("{:02x}", rng.random::<u8>())).collect()
    }

    /// Issues a fresh token, revoking the user's previous one.
    pub fn issue_token(&self, course: &CourseId, user: &UserId) -> SessionToken {
        let token = SessionToken {
            token: self.random_hex(16),
            user_id: user.clone(),
            course_id: course.clone(),
            issued_at: self.now(),
        };
        let mut t = self.tokens.write().expect("token lock");
        if let Some(old) = t.by_user.insert((course.clone(), user.clone()), token.token.clone()) {
            t.by_token.remove(&old);
        }
        t.by_token.insert(token.token.clone(), token.clone());
        token
    }

    pub fn resolve_token(&self, token: &str) -> Option<SessionToken> {
        self.tokens.read().expect("token lock").by_token.get(token).cloned()
    }

    /// Builds an event from the writer's current state, appends it, applies it
    /// and publishes the new snapshot. `build` returning `None` appends nothing.
    pub fn write<F>(&self, course: &CourseId, build: F) -> Result<(Option<Event>, Arc<CourseState>), ApiError>
    where
        F: FnOnce(&CourseState) -> Result<Option<EventKind>, ApiError>,
    {
        let handle = self.course(course)?;
        let mut w = handle.writer.lock().expect("writer lock");
        let Some(kind) = build(&w.state)? else {
            return Ok((None, handle.snapshot()));
        };
        let event = w.log.append(self.now(), kind)?.clone();
        w.state.apply(&event);
        let snapshot = Arc::new(w.state.clone());
        *handle.snapshot.write().expect("snapshot lock") = snapshot.clone();
        Ok((Some(event), snapshot))
    }

    /// Like [`AppState::write`] for builders that always produce an event.
    pub fn append<F>(&self, course: &CourseId, build: F) -> Result<(Event, Arc<CourseState>), ApiError>
    where
        F: FnOnce(&CourseState) -> Result<EventKind, ApiError>,
    {
        let (event, snapshot) = self.write(course, |s| build(s).map(Some))?;
        Ok((event.expect("builder always yields an event"), snapshot))
    }
}
