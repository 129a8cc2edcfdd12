use std::io;
use std::net::SocketAddr;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hearthwire_core::intent::decode_unsigned_wire;
use hearthwire_core::{DeviceId, SignedIntentPacket};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tower_http::cors::CorsLayer;

use crate::gateway::{CommandError, Gateway};

/// Pollers identify themselves as the emulator with `x-hearthwire-role: emulator`.
pub const ROLE_HEADER: &str = "x-hearthwire-role";

impl IntoResponse for CommandError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({ "error": self.to_string(), "kind": self.kind() }))).into_response()
    }
}

async fn command(State(gw): State<Gateway>, body: Bytes) -> Response {
    let packet = match SignedIntentPacket::from_wire(&body) {
        Ok(p) => p,
        Err(e) => return CommandError::BadRequest(e.to_string()).into_response(),
    };
    match gw.handle_command(&packet).await {
        Ok(outcome) => Json(outcome).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn command_unsigned(State(gw): State<Gateway>, body: Bytes) -> Response {
    let envelope = match decode_unsigned_wire(&body) {
        Ok(e) => e,
        Err(e) => return CommandError::BadRequest(e.to_string()).into_response(),
    };
    match gw.handle_unsigned(&envelope) {
        Ok(outcome) => Json(outcome).into_response(),
        Err(e) => e.into_response(),
    }
}

fn note_poller(gw: &Gateway, headers: &HeaderMap) {
    if headers
        .get(ROLE_HEADER)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|role| role.eq_ignore_ascii_case("emulator"))
    {
        gw.mark_emulator_seen();
    }
}

async fn state(State(gw): State<Gateway>, headers: HeaderMap) -> Response {
    note_poller(&gw, &headers);
    Json(gw.state()).into_response()
}

async fn device_state(State(gw): State<Gateway>, headers: HeaderMap, Path(dev): Path<String>) -> Response {
    note_poller(&gw, &headers);
    match DeviceId::new(dev.clone()).ok().and_then(|id| gw.device_state(&id)) {
        Some(state) => Json(state).into_response(),
        None => CommandError::UnknownDevice(dev).into_response(),
    }
}

async fn devices(State(gw): State<Gateway>) -> Response {
    Json(gw.status()).into_response()
}

#[derive(Deserialize)]
struct LogQuery {
    #[serde(default)]
    since: u64,
}

async fn logs(State(gw): State<Gateway>, Query(q): Query<LogQuery>) -> Response {
    Json(gw.log().since(q.since)).into_response()
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(gateway: Gateway) -> Router {
    let mut router = Router::new()
        .route("/api/command", post(command))
        .route("/api/devices", get(devices))
        .route("/api/state", get(state))
        .route("/api/state/{device}", get(device_state))
        .route("/api/logs", get(logs))
        .route("/health", get(health));
    if gateway.config().allow_unsigned {
        router = router.route("/api/command/unsigned", post(command_unsigned));
    }
    router.layer(CorsLayer::permissive()).with_state(gateway)
}

/// A gateway serving HTTP in a background task; stops when dropped.
pub struct GatewayServer {
    pub addr: SocketAddr,
    pub gateway: Gateway,
    task: JoinHandle<io::Result<()>>,
}

impl GatewayServer {
    pub async fn start(addr: SocketAddr, gateway: Gateway) -> io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        Ok(Self::from_listener(listener, gateway)?)
    }

    pub fn from_listener(listener: TcpListener, gateway: Gateway) -> io::Result<Self> {
        let addr = listener.local_addr()?;
        let app = router(gateway.clone());
        let task = tokio::spawn(async move { axum::serve(listener, app).await });
        Ok(GatewayServer { addr, gateway, task })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for GatewayServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}
