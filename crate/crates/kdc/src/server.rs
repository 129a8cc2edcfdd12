use std::io;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use crate::store::{KdcError, KeyStore};

#[derive(Clone)]
pub struct KdcState {
    pub store: Arc<KeyStore>,
    /// When set, `POST /kdc/keys` requires `Authorization: Bearer <token>`.
    pub token: Option<Arc<str>>,
}

impl KdcState {
    pub fn new(store: KeyStore) -> Self {
        KdcState {
            store: Arc::new(store),
            token: None,
        }
    }

    pub fn with_token(mut self, token: impl Into<Arc<str>>) -> Self {
        self.token = Some(token.into());
        self
    }
}

#[derive(Deserialize)]
struct RegisterBody {
    client_id: String,
    public_key: String,
}

#[derive(Serialize)]
struct KeyBody<'a> {
    client_id: &'a str,
    public_key: &'a str,
}

#[derive(Deserialize)]
struct VerifyBody {
    client_id: String,
    digest_hex: String,
    signature_b64: String,
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

impl IntoResponse for KdcError {
    fn into_response(self) -> Response {
        let status = match self {
            KdcError::MalformedKey(_) => StatusCode::BAD_REQUEST,
            KdcError::NotFound(_) => StatusCode::NOT_FOUND,
            KdcError::Snapshot(_) | KdcError::SnapshotFormat(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        error(status, self)
    }
}

fn authorized(state: &KdcState, headers: &HeaderMap) -> bool {
    let Some(token) = &state.token else { return true };
    headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|given| given == &**token)
}

async fn register(State(state): State<KdcState>, headers: HeaderMap, body: Json<RegisterBody>) -> Response {
    if !authorized(&state, &headers) {
        return error(StatusCode::UNAUTHORIZED, "missing or wrong bearer token");
    }
    match state.store.register(&body.client_id, &body.public_key) {
        Ok(record) => {
            tracing::info!(client = %record.client_id, "key registered");
            (StatusCode::CREATED, Json(record)).into_response()
        }
        Err(e) => e.into_response(),
    }
}

async fn get_key(State(state): State<KdcState>, Path(client_id): Path<String>) -> Response {
    match state.store.get(&client_id) {
        Some(record) => Json(KeyBody {
            client_id: &record.client_id,
            public_key: &record.public_key,
        })
        .into_response(),
        None => KdcError::NotFound(client_id).into_response(),
    }
}

async fn verify(State(state): State<KdcState>, Json(body): Json<VerifyBody>) -> Response {
    let Ok(digest) = hex::decode(&body.digest_hex) else {
        return error(StatusCode::BAD_REQUEST, "digest_hex is not hex");
    };
    let Ok(signature) = base64::engine::general_purpose::STANDARD.decode(&body.signature_b64) else {
        return error(StatusCode::BAD_REQUEST, "signature_b64 is not base64");
    };
    match state.store.verify_for(&body.client_id, &digest, &signature) {
        Ok(verdict) => Json(json!({ "valid": verdict.is_valid() })).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn health(State(state): State<KdcState>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "keys": state.store.len() }))
}

pub fn router(state: KdcState) -> Router {
    Router::new()
        .route("/kdc/keys", post(register))
        .route("/kdc/keys/{client_id}", get(get_key))
        .route("/kdc/verify", post(verify))
        .route("/health", get(health))
        .with_state(state)
}

pub async fn serve(listener: TcpListener, state: KdcState) -> io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// A KDC serving in a background task; stops when dropped.
pub struct KdcServer {
    pub addr: SocketAddr,
    pub state: KdcState,
    task: JoinHandle<io::Result<()>>,
}

impl KdcServer {
    pub async fn start(addr: SocketAddr, state: KdcState) -> io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let task = tokio::spawn(serve(listener, state.clone()));
        Ok(KdcServer { addr, state, task })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for KdcServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}
