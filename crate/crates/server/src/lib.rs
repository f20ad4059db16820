//! HTTP/JSON API over the ripple engine.
//!
//! Every mutating endpoint appends exactly one event through the course's
//! single writer; reads use the latest published snapshot. Errors are JSON
//! `{code, message}` bodies.

pub mod auth;
pub mod config;
pub mod error;
pub mod routes;
pub mod state;

use std::net::SocketAddr;

pub use config::{Clock, ServerConfig};
pub use error::{ApiError, ErrorBody};
pub use routes::router;
pub use state::{AppState, SessionToken, SharedState};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("data directory {path}: {message}")]
    BadDataDir { path: std::path::PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Opens the data directory and builds the router.
pub fn build(config: ServerConfig) -> Result<axum::Router, ServeError> {
    let path = config.data_dir.clone();
    let state = AppState::open(config).map_err(|e| ServeError::BadDataDir { path, message: e.to_string() })?;
    Ok(router(state))
}

/// Serves until the process is stopped.
pub async fn serve(config: ServerConfig) -> Result<(), ServeError> {
    let port = config.port;
    let app = build(config)?;
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => ServeError::PortInUse(port),
        _ => ServeError::Io(e),
    })?;
    axum::serve(listener, app).await?;
    Ok(())
}
