//! HTTP gateway for the crisisbot engine.
//!
//! Endpoints:
//!
//! * `POST /v1/messages`: [`WireMessage`] in, [`WireReply`] out.
//! * `GET /v1/health`: `{status, model_version, threshold, uptime}`.
//! * `POST /v1/webhook/{platform}`: [`PlatformEvent`] in, reply delivered
//!   through the platform's [`PlatformAdapter`].
//!
//! Messages for one session are processed in arrival order; different
//! sessions run concurrently against the shared, read-only engine.

pub mod config;
pub mod platform;
pub mod sanitize;
pub mod wire;

mod loader;
mod routes;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use chrono::Utc;
use crisisbot::datastore::{Store, Turn};
use crisisbot::dialogue::{Channel, Session};

pub use config::GatewayConfig;
pub use loader::{load_engine, serve, LoadError, LoadedEngine};
pub use platform::{MessengerSimulator, PlatformAdapter, PlatformEvent};
pub use wire::{WireMessage, WireReply};

/// Sessions idle in memory beyond this count are evicted (their stored
/// history is unaffected).
const MAX_LIVE_SESSIONS: usize = 10_000;

type SessionSlot = Arc<tokio::sync::Mutex<Option<Session>>>;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    TooLarge(String),
    #[error("engine is still loading")]
    NotLoaded,
    #[error("invalid verification token")]
    Forbidden,
    #[error("no adapter for platform \"{0}\"")]
    UnknownPlatform(String),
    #[error("internal error: {0}")]
    Internal(String),
}

struct Shared {
    engine: RwLock<Option<LoadedEngine>>,
    store: Arc<Store>,
    sessions: Mutex<HashMap<String, SessionSlot>>,
    adapters: HashMap<String, Arc<dyn PlatformAdapter>>,
    webhook_secret: Option<String>,
    static_dir: Option<std::path::PathBuf>,
    started: Instant,
}

/// Cheaply cloneable handle to the gateway state.
#[derive(Clone)]
pub struct Gateway {
    shared: Arc<Shared>,
}

pub struct GatewayBuilder {
    store: Arc<Store>,
    adapters: HashMap<String, Arc<dyn PlatformAdapter>>,
    webhook_secret: Option<String>,
    static_dir: Option<std::path::PathBuf>,
}

impl GatewayBuilder {
    pub fn webhook_secret(mut self, secret: Option<String>) -> Self {
        self.webhook_secret = secret;
        self
    }

    pub fn adapter(mut self, platform: &str, adapter: Arc<dyn PlatformAdapter>) -> Self {
        self.adapters.insert(platform.to_string(), adapter);
        self
    }

    pub fn static_dir(mut self, dir: Option<std::path::PathBuf>) -> Self {
        self.static_dir = dir;
        self
    }

    pub fn build(self) -> Gateway {
        Gateway {
            shared: Arc::new(Shared {
                engine: RwLock::new(None),
                store: self.store,
                sessions: Mutex::new(HashMap::new()),
                adapters: self.adapters,
                webhook_secret: self.webhook_secret,
                static_dir: self.static_dir,
                started: Instant::now(),
            }),
        }
    }
}

impl Gateway {
    pub fn builder(store: Arc<Store>) -> GatewayBuilder {
        GatewayBuilder { store, adapters: HashMap::new(), webhook_secret: None, static_dir: None }
    }

    /// Makes the engine available; until then message endpoints answer 503.
    pub fn install(&self, loaded: LoadedEngine) {
        *self.shared.engine.write().unwrap_or_else(|e| e.into_inner()) = Some(loaded);
    }

    pub fn is_ready(&self) -> bool {
        self.loaded().is_some()
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.shared.store
    }

    pub fn router(&self) -> axum::Router {
        routes::router(self.clone())
    }

    fn loaded(&self) -> Option<LoadedEngine> {
        self.shared.engine.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn session_slot(&self, session_id: &str) -> SessionSlot {
        let mut sessions = self.shared.sessions.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(slot) = sessions.get(session_id) {
            return slot.clone();
        }
        if sessions.len() >= MAX_LIVE_SESSIONS {
            // drop slots nobody is waiting on
            sessions.retain(|_, slot| Arc::strong_count(slot) > 1);
        }
        let slot: SessionSlot = Arc::default();
        sessions.insert(session_id.to_string(), slot.clone());
        slot
    }

    /// Sanitizes, answers and records one message. Holds the session's slot
    /// for the whole call so a session's messages are handled one at a time.
    pub async fn process(&self, session_id: &str, channel: Channel, raw_text: &str) -> Result<WireReply, ApiError> {
        let loaded = self.loaded().ok_or(ApiError::NotLoaded)?;
        let text = sanitize::sanitize(raw_text);
        let guard = self.session_slot(session_id).lock_owned().await;
        let store = self.shared.store.clone();
        let id = session_id.to_string();
        tokio::task::spawn_blocking(move || {
            let mut guard = guard;
            let now = Utc::now();
            let session = guard.get_or_insert_with(|| Session::new(id.clone(), channel, now));
            let reply = loaded.engine.handle_message(session, &text, now);
            let turn = Turn {
                timestamp: now,
                user_text: text,
                reply_kind: reply.kind,
                intent_id: reply.intent_id.clone(),
                confidence: reply.confidence,
            };
            store.record_turn(&id, session.channel, &turn).map_err(|e| ApiError::Internal(e.to_string()))?;
            Ok(WireReply::from_reply(&id, reply, now))
        })
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
    }
}
