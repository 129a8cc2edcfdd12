use std::io;
use std::net::SocketAddr;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tower_http::cors::CorsLayer;

use crate::engine::Emulator;
use crate::poll::Poller;

#[derive(Clone)]
struct AppState {
    emulator: Emulator,
    poller: Option<Poller>,
}

#[derive(Deserialize)]
struct LogQuery {
    #[serde(default)]
    cursor: usize,
}

async fn state(State(app): State<AppState>) -> Response {
    Json(app.emulator.snapshot()).into_response()
}

async fn logs(State(app): State<AppState>, Query(q): Query<LogQuery>) -> Response {
    let (entries, cursor) = app.emulator.log().read_from(q.cursor);
    Json(json!({ "entries": entries, "cursor": cursor })).into_response()
}

/// Polls the gateway right away and reports what changed.
async fn poll(State(app): State<AppState>) -> Response {
    let Some(poller) = app.poller else {
        return (StatusCode::CONFLICT, Json(json!({ "error": "not in http-poll mode" }))).into_response();
    };
    match poller.poll_once().await {
        Ok(report) => Json(report).into_response(),
        Err(e) => (StatusCode::BAD_GATEWAY, Json(json!({ "error": e.to_string() }))).into_response(),
    }
}

/// `GET /emulator/state`, `GET /emulator/logs?cursor=N` and, in http-poll
/// mode, `POST /emulator/poll`.
pub fn router(emulator: Emulator, poller: Option<Poller>) -> Router {
    Router::new()
        .route("/emulator/state", get(state))
        .route("/emulator/logs", get(logs))
        .route("/emulator/poll", post(poll))
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .layer(CorsLayer::permissive())
        .with_state(AppState { emulator, poller })
}

pub struct EmulatorServer {
    pub addr: SocketAddr,
    task: JoinHandle<io::Result<()>>,
}

impl EmulatorServer {
    pub async fn start(addr: SocketAddr, emulator: Emulator, poller: Option<Poller>) -> io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let app = router(emulator, poller);
        let task = tokio::spawn(async move { axum::serve(listener, app).await });
        Ok(EmulatorServer { addr, task })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for EmulatorServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}
