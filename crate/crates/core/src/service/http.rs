//! HTTP surface: read-only session queries and the `/live` websocket.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio::sync::Notify;

use crate::feedback::FeedbackMode;
use crate::session::replay;

use super::config::EngineConfig;
use super::live::{load_catalog, LiveSession, UiOutbox};

pub const DEFAULT_UI_BUFFER: usize = 256;

#[derive(Debug, Clone)]
pub struct AppState {
    pub data_dir: PathBuf,
    pub config: EngineConfig,
    pub ui_buffer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub melody_id: String,
    pub mode: FeedbackMode,
    pub created_utc: DateTime<Utc>,
    pub scored: bool,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/melodies", get(melodies))
        .route("/sessions", get(sessions))
        .route("/sessions/:id/log", get(session_log))
        .route("/sessions/:id/score", get(session_score))
        .route("/live", get(live))
        .with_state(Arc::new(state))
}

fn sessions_dir(data: &Path) -> PathBuf {
    data.join("sessions")
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn session_text(data: &Path, id: &str) -> Option<String> {
    if !valid_id(id) {
        return None;
    }
    std::fs::read_to_string(sessions_dir(data).join(format!("{id}.jsonl"))).ok()
}

/// Summaries of every readable session under `data/sessions`, sorted by id.
pub fn list_sessions(data: &Path) -> Vec<SessionSummary> {
    let Ok(entries) = std::fs::read_dir(sessions_dir(data)) else {
        return Vec::new();
    };
    let mut out: Vec<SessionSummary> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .filter_map(|p| std::fs::read_to_string(p).ok())
        .filter_map(|t| replay(&t).ok())
        .map(|log| SessionSummary {
            scored: log.stored_score().is_some(),
            session_id: log.header.session_id,
            melody_id: log.header.config.melody_id,
            mode: log.header.config.mode,
            created_utc: log.header.created_utc,
        })
        .collect();
    out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    out
}

fn not_found(what: &str) -> Response {
    (StatusCode::NOT_FOUND, format!("{what} not found\n")).into_response()
}

async fn melodies(State(st): State<Arc<AppState>>) -> Response {
    Json(load_catalog(&st.data_dir.join("melodies"))).into_response()
}

async fn sessions(State(st): State<Arc<AppState>>) -> Response {
    Json(list_sessions(&st.data_dir)).into_response()
}

async fn session_log(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    match session_text(&st.data_dir, &id) {
        Some(text) => ([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response(),
        None => not_found("session"),
    }
}

async fn session_score(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(text) = session_text(&st.data_dir, &id) else {
        return not_found("session");
    };
    match replay(&text) {
        Ok(log) => match log.stored_score() {
            Some(score) => Json(score.clone()).into_response(),
            None => not_found("score"),
        },
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, format!("{e}\n")).into_response(),
    }
}

async fn live(State(st): State<Arc<AppState>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| live_connection(socket, st))
}

/// The reader side owns the trial and never waits on the UI: messages go into
/// a bounded outbox that a separate task drains toward the socket.
async fn live_connection(socket: WebSocket, st: Arc<AppState>) {
    use futures_util::{SinkExt, StreamExt};

    let (mut tx, mut rx) = socket.split();
    let outbox = Arc::new(Mutex::new(UiOutbox::new(st.ui_buffer)));
    let notify = Arc::new(Notify::new());
    let closed = Arc::new(std::sync::atomic::AtomicBool::new(false));

    let writer = {
        let (outbox, notify, closed) = (outbox.clone(), notify.clone(), closed.clone());
        tokio::spawn(async move {
            loop {
                notify.notified().await;
                let batch = outbox.lock().expect("outbox lock").drain();
                for msg in batch {
                    if tx.send(Message::Text(msg.to_json())).await.is_err() {
                        return;
                    }
                }
                if closed.load(std::sync::atomic::Ordering::Acquire) && outbox.lock().expect("outbox lock").is_empty() {
                    let _ = tx.close().await;
                    return;
                }
            }
        })
    };

    let mut session = LiveSession::new(st.data_dir.clone(), st.config.clone());
    while let Some(Ok(msg)) = rx.next().await {
        let out = match msg {
            Message::Text(text) => session.handle_text(&text),
            Message::Binary(bytes) => session.push_audio(&bytes),
            Message::Close(_) => break,
            _ => continue,
        };
        if !out.is_empty() {
            let mut q = outbox.lock().expect("outbox lock");
            for m in out {
                q.push(m);
            }
            drop(q);
            notify.notify_one();
        }
    }
    session.close();
    closed.store(true, std::sync::atomic::Ordering::Release);
    notify.notify_one();
    let _ = writer.await;
}

/// Bind and serve until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
