//! HTTP/JSON service for the browser UI.
//!
//! There is no authentication: run it on a trusted network only.

pub mod api;
pub mod embedding;
pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::DefaultBodyLimit;
use axum::http::{HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::session::Extensions;
use embedding::EmbeddingClient;
use store::{Store, DEFAULT_SESSION_CAP};

pub use error::ApiError;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;
pub const DEFAULT_CORS_ORIGINS: [&str; 2] = ["http://localhost:5173", "http://127.0.0.1:5173"];

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub port: u16,
    pub max_upload_bytes: usize,
    pub cors_origins: Vec<String>,
    pub session_cap: usize,
    pub embedding_endpoint: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            port: DEFAULT_PORT,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            cors_origins: DEFAULT_CORS_ORIGINS.iter().map(|s| s.to_string()).collect(),
            session_cap: DEFAULT_SESSION_CAP,
            embedding_endpoint: None,
        }
    }
}

impl ServerConfig {
    /// Defaults overridden by `PORT`, `MAX_UPLOAD_BYTES`, `CORS_ORIGINS`
    /// (comma-separated), `SESSION_CAP` and `EMBEDDING_ENDPOINT`.
    pub fn from_env() -> Result<Self, String> {
        let mut c = ServerConfig::default();
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if let Some(v) = var("PORT") {
            c.port = v.parse().map_err(|_| format!("PORT is not a port number: {v}"))?;
        }
        if let Some(v) = var("MAX_UPLOAD_BYTES") {
            c.max_upload_bytes = v.parse().map_err(|_| format!("MAX_UPLOAD_BYTES is not a size: {v}"))?;
        }
        if let Some(v) = var("SESSION_CAP") {
            c.session_cap = v.parse().map_err(|_| format!("SESSION_CAP is not a count: {v}"))?;
        }
        if let Some(v) = var("CORS_ORIGINS") {
            c.cors_origins = v.split(',').map(|s| s.trim().to_string()).collect();
        }
        c.embedding_endpoint = var("EMBEDDING_ENDPOINT");
        Ok(c)
    }
}

pub struct AppState {
    pub config: ServerConfig,
    pub store: Store,
    pub embedding: Option<EmbeddingClient>,
}

impl AppState {
    pub fn new(config: ServerConfig, extensions: Extensions) -> Self {
        let embedding = config
            .embedding_endpoint
            .as_ref()
            .map(|e| EmbeddingClient::new(e.clone(), Duration::from_secs(5)));
        AppState {
            store: Store::new(config.session_cap, extensions),
            config,
            embedding,
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let origins: Vec<HeaderValue> = state
        .config
        .cors_origins
        .iter()
        .filter_map(|o| HeaderValue::from_str(o).ok())
        .collect();
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::list(origins))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([axum::http::header::CONTENT_TYPE]);
    let sessions = "/api/sessions/{id}";
    Router::new()
        .route("/api/health", get(api::health))
        .route(
            "/api/datasets",
            post(api::upload_dataset).layer(DefaultBodyLimit::max(state.config.max_upload_bytes)),
        )
        .route("/api/sessions", post(api::create_session))
        .route(sessions, get(api::get_session))
        .route(&format!("{sessions}/anomalies"), get(api::anomalies))
        .route(&format!("{sessions}/summary"), get(api::summary))
        .route(&format!("{sessions}/chart"), get(api::chart))
        .route(&format!("{sessions}/suggestions"), post(api::suggestions))
        .route(&format!("{sessions}/preview"), post(api::preview))
        .route(&format!("{sessions}/actions"), post(api::commit))
        .route(&format!("{sessions}/undo"), post(api::undo))
        .route(&format!("{sessions}/redo"), post(api::redo))
        .route(&format!("{sessions}/script"), get(api::script))
        .route(&format!("{sessions}/export"), get(api::export))
        .route(&format!("{sessions}/table"), get(api::table))
        .fallback(api::fallback)
        .layer(cors)
        .with_state(state)
}

/// Binds the port, then serves until the process exits.
pub async fn serve(config: ServerConfig, extensions: Extensions) -> std::io::Result<()> {
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(listener, config, extensions).await
}

pub async fn serve_on(
    listener: tokio::net::TcpListener,
    config: ServerConfig,
    extensions: Extensions,
) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    let state = Arc::new(AppState::new(config, extensions));
    axum::serve(listener, router(state)).await
}
