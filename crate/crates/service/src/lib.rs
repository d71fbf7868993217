//! HTTP JSON API over the cold-start engine.
//!
//! Every mutation goes through one engine lock and is appended to the event
//! log before the response is sent, so per-user event order is the order of
//! acknowledged requests and a later read sees every acknowledged write.

mod api;
mod error;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::http::{HeaderName, HeaderValue, Method};
use axum::middleware;
use axum::routing::{get, post};
use axum::Router;
use coldstart_core::config::EngineConfig;
use coldstart_core::engine::{load_catalog, Engine, EngineError};
use coldstart_core::provider::{RemoteChatProvider, RemoteCrossEncoder};
use parking_lot::RwLock;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use error::ApiError;

pub const EVENT_LOG_FILE: &str = "events.log";
pub const API_KEY_HEADER: &str = "x-api-key";
pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
/// Epoch milliseconds; honoured only when `service.test_mode` is set.
pub const TEST_CLOCK_HEADER: &str = "x-test-clock";

pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0)
    })
}

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<RwLock<Engine>>,
    pub config: Arc<EngineConfig>,
    pub clock: Clock,
}

impl AppState {
    pub fn new(engine: Engine) -> Self {
        let config = Arc::new(engine.config().clone());
        Self {
            engine: Arc::new(RwLock::new(engine)),
            config,
            clock: system_clock(),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Builds the engine from the configured catalogue and providers and
    /// replays the event log in `paths.data_dir`.
    pub fn open(config: EngineConfig) -> Result<Self, EngineError> {
        let items = load_catalog(config.paths.catalog.as_deref())?;
        let mut engine = Engine::new(config.clone(), &items)?;
        if let Some(p) = &config.providers.generation {
            engine = engine.with_generation(Arc::new(RemoteChatProvider::new(p.clone())));
        }
        if let Some(s) = &config.providers.scorer {
            engine = engine.with_scorer(Arc::new(RemoteCrossEncoder::new(s.clone())));
        }
        engine.attach_log(&event_log_path(&config))?;
        tracing::info!(
            items = engine.item_count(),
            users = engine.profiles().len(),
            "engine ready"
        );
        Ok(Self::new(engine))
    }
}

pub fn event_log_path(config: &EngineConfig) -> PathBuf {
    config.paths.data_dir.join(EVENT_LOG_FILE)
}

fn cors(config: &EngineConfig) -> CorsLayer {
    let origins: Vec<HeaderValue> = config
        .service
        .cors_origins
        .iter()
        .filter_map(|o| HeaderValue::from_str(o).ok())
        .collect();
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers([
            axum::http::header::CONTENT_TYPE,
            HeaderName::from_static(API_KEY_HEADER),
            HeaderName::from_static(IDEMPOTENCY_HEADER),
            HeaderName::from_static(TEST_CLOCK_HEADER),
        ]);
    if origins.is_empty() {
        layer.allow_origin(Any)
    } else {
        layer.allow_origin(AllowOrigin::list(origins))
    }
}

pub fn router(state: AppState) -> Router {
    let protected = Router::new()
        .route("/questionnaire", get(api::questionnaire))
        .route("/users", post(api::create_user))
        .route("/users/{id}/questionnaire", post(api::submit_questionnaire))
        .route("/users/{id}/profile", get(api::profile))
        .route("/sessions", post(api::create_session))
        .route("/sessions/{id}/recommendations", get(api::recommendations))
        .route("/feedback", post(api::feedback))
        .route_layer(middleware::from_fn_with_state(state.clone(), api::require_api_key));
    Router::new()
        .route("/healthz", get(api::healthz))
        .merge(protected)
        .fallback(api::not_found)
        .layer(cors(&state.config))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: AppState) -> std::io::Result<()> {
    let addr: SocketAddr = state
        .config
        .service
        .bind
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("bind address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
