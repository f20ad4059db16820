use std::env;
use std::path::PathBuf;
use std::sync::Arc;

use ripple_core::{EngineConfig, Timestamp};

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

pub const DEFAULT_PORT: u16 = 9000;

#[derive(Clone)]
pub struct ServerConfig {
    pub port: u16,
    pub data_dir: PathBuf,
    /// Development mode: any caller may log in as any (new or existing) user.
    pub allow_unauthenticated: bool,
    pub rng_seed: u64,
    pub engine: EngineConfig,
    pub clock: Clock,
}

impl std::fmt::Debug for ServerConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerConfig")
            .field("port", &self.port)
            .field("data_dir", &self.data_dir)
            .field("allow_unauthenticated", &self.allow_unauthenticated)
            .field("rng_seed", &self.rng_seed)
            .field("engine", &self.engine)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{name} is not valid: {value:?}")]
    Invalid { name: &'static str, value: String },
}

fn parse_bool(name: &'static str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::Invalid { name, value: value.to_owned() }),
    }
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            port: DEFAULT_PORT,
            data_dir: data_dir.into(),
            allow_unauthenticated: true,
            rng_seed: 0,
            engine: EngineConfig::default(),
            clock: Arc::new(Timestamp::now),
        }
    }

    /// Reads API_PORT, DATA_DIR, ALLOW_UNAUTHENTICATED and RNG_SEED.
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut c = Self::new(get("DATA_DIR").unwrap_or_else(|| "data".into()));
        if let Some(v) = get("API_PORT") {
            c.port = v.trim().parse().map_err(|_| ConfigError::Invalid { name: "API_PORT", value: v.clone() })?;
        }
        if let Some(v) = get("ALLOW_UNAUTHENTICATED") {
            c.allow_unauthenticated = parse_bool("ALLOW_UNAUTHENTICATED", &v)?;
        }
        if let Some(v) = get("RNG_SEED") {
            c.rng_seed = v.trim().parse().map_err(|_| ConfigError::Invalid { name: "RNG_SEED", value: v.clone() })?;
        }
        c.engine.hyper.rng_seed = c.rng_seed;
        Ok(c)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self.engine.hyper.rng_seed = seed;
        self
    }
}
