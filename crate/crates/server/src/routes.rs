use std::path::{Component, Path};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use crisisbot::dialogue::Channel;
use serde_json::json;

use crate::platform::{session_id_for, token_matches, PlatformEvent, MESSAGE_EVENT};
use crate::wire::{WireError, WireMessage, MAX_TEXT_CHARS};
use crate::{ApiError, Gateway};

const PLACEHOLDER_PAGE: &str = "<!doctype html><meta charset=\"utf-8\"><title>crisisbot</title>\
<p>crisisbot gateway. POST JSON to <code>/v1/messages</code>; status at <code>/v1/health</code>.</p>";

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::TooLarge(_) => StatusCode::PAYLOAD_TOO_LARGE,
            ApiError::NotLoaded => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Forbidden => StatusCode::FORBIDDEN,
            ApiError::UnknownPlatform(_) => StatusCode::NOT_FOUND,
            ApiError::Internal(msg) => {
                log::error!("{msg}");
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

impl From<WireError> for ApiError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::TooLong(_) => ApiError::TooLarge(e.to_string()),
            other => ApiError::BadRequest(other.to_string()),
        }
    }
}

pub(crate) fn router(gateway: Gateway) -> Router {
    Router::new()
        .route("/v1/messages", post(post_message))
        .route("/v1/health", get(health))
        .route("/v1/webhook/{platform}", post(webhook))
        .fallback(get(static_file))
        .with_state(gateway)
}

async fn post_message(State(gw): State<Gateway>, body: Bytes) -> Result<Response, ApiError> {
    let msg = WireMessage::parse(&body)?;
    let channel = msg.validate()?;
    let reply = gw.process(&msg.session_id, channel, &msg.text).await?;
    Ok(Json(reply).into_response())
}

async fn health(State(gw): State<Gateway>) -> Json<serde_json::Value> {
    let uptime = gw.shared.started.elapsed().as_secs_f64();
    Json(match gw.loaded() {
        Some(l) => json!({
            "status": "ready",
            "model_version": l.model_version,
            "threshold": l.engine.threshold(),
            "uptime": uptime,
        }),
        None => json!({ "status": "loading", "model_version": null, "threshold": null, "uptime": uptime }),
    })
}

async fn webhook(
    State(gw): State<Gateway>,
    UrlPath(platform): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let adapter = gw.shared.adapters.get(&platform).cloned().ok_or_else(|| ApiError::UnknownPlatform(platform.clone()))?;
    let event: PlatformEvent =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("malformed event: {e}")))?;
    match &gw.shared.webhook_secret {
        Some(secret) if token_matches(&event.token, secret) => {}
        _ => return Err(ApiError::Forbidden),
    }
    if event.kind != MESSAGE_EVENT {
        return Ok(Json(json!({ "status": "skipped", "type": event.kind })).into_response());
    }
    let n = event.text.chars().count();
    if n > MAX_TEXT_CHARS {
        return Err(WireError::TooLong(n).into());
    }
    let channel = Channel::parse(&platform).unwrap_or(Channel::MessengerSim);
    let session_id = session_id_for(&platform, &event.sender_id);
    let reply = gw.process(&session_id, channel, &event.text).await?;
    let text = reply.text.clone();
    let sender = event.sender_id.clone();
    tokio::task::spawn_blocking(move || adapter.deliver(&sender, &text))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(json!({ "status": "delivered", "session_id": session_id, "kind": reply.kind })).into_response())
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        _ => "application/octet-stream",
    }
}

/// Files from the configured static directory; a placeholder page at `/`
/// when none is configured.
async fn static_file(State(gw): State<Gateway>, uri: Uri) -> Response {
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let Some(dir) = &gw.shared.static_dir else {
        return if rel == "index.html" {
            Html(PLACEHOLDER_PAGE).into_response()
        } else {
            StatusCode::NOT_FOUND.into_response()
        };
    };
    let rel = Path::new(rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return StatusCode::NOT_FOUND.into_response();
    }
    let path = dir.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}
