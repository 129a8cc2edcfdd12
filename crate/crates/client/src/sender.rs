use std::time::{Duration, Instant};

use hearthwire_core::clock::unix_ms;
use hearthwire_core::intent::{unsigned_wire, EnvelopeError};
use hearthwire_core::{sign_intent, DeviceCommand, DeviceResponse, HashAlg, IntentEnvelope, PrivateKey};
use hearthwire_gateway::CommandOutcome;
use serde::Deserialize;
use thiserror::Error;

use crate::exit;

#[derive(Debug, Error)]
pub enum SendError {
    #[error("{0}")]
    Envelope(#[from] EnvelopeError),
    #[error("signing failed: {0}")]
    Sign(String),
    #[error("gateway unreachable: {0}")]
    Unreachable(String),
    #[error("rejected ({kind}): {message}")]
    Auth { kind: String, message: String },
    #[error("{message}")]
    Validation { kind: String, message: String },
    #[error("gateway answered {status}: {message}")]
    Status { status: u16, message: String },
}

impl SendError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SendError::Auth { .. } => exit::AUTH,
            SendError::Validation { .. } => exit::VALIDATION,
            SendError::Unreachable(_) => exit::CONNECTIVITY,
            SendError::Status { status: 502, .. } => exit::CONNECTIVITY,
            SendError::Envelope(_) | SendError::Sign(_) | SendError::Status { .. } => exit::FAILURE,
        }
    }
}

/// One completed HTTP command.
#[derive(Debug, Clone)]
pub struct Sent {
    pub results: Vec<DeviceResponse>,
    /// Key fetch plus signature check, as reported by the gateway.
    pub verify_ms: f64,
    /// Local signing time; zero for unsigned sends.
    pub sign_ms: f64,
    /// Request start to response end, as seen by this client.
    pub round_trip_ms: f64,
    /// Size of the request body.
    pub wire_bytes: usize,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
    #[serde(default)]
    kind: String,
}

/// Builds, signs and posts intents to a gateway.
pub struct HttpSender {
    base: String,
    client_id: String,
    key: Option<PrivateKey>,
    alg: HashAlg,
    http: reqwest::Client,
}

impl HttpSender {
    pub fn new(gateway: impl Into<String>, client_id: impl Into<String>, key: PrivateKey) -> Self {
        Self::build(gateway.into(), client_id.into(), Some(key))
    }

    /// A sender for the gateway's unsigned benchmarking route.
    pub fn unsigned(gateway: impl Into<String>, client_id: impl Into<String>) -> Self {
        Self::build(gateway.into(), client_id.into(), None)
    }

    fn build(gateway: String, client_id: String, key: Option<PrivateKey>) -> Self {
        HttpSender {
            base: gateway.trim_end_matches('/').to_owned(),
            client_id,
            key,
            alg: HashAlg::Md5,
            http: reqwest::Client::builder()
                .timeout(Duration::from_secs(10))
                .build()
                .expect("static client config"),
        }
    }

    pub fn with_hash(mut self, alg: HashAlg) -> Self {
        self.alg = alg;
        self
    }

    pub fn client_id(&self) -> &str {
        &self.client_id
    }

    /// Sends `commands` as one intent; more than one makes it composite.
    pub async fn send(&self, commands: Vec<DeviceCommand>) -> Result<Sent, SendError> {
        let envelope = IntentEnvelope::new(&self.client_id, commands, unix_ms())?;
        let (body, path, sign_ms) = match &self.key {
            Some(key) => {
                let started = Instant::now();
                let packet = sign_intent(&envelope, key, self.alg).map_err(|e| SendError::Sign(e.to_string()))?;
                let sign_ms = started.elapsed().as_secs_f64() * 1000.0;
                (packet.to_wire(), "/api/command", sign_ms)
            }
            None => (unsigned_wire(&envelope), "/api/command/unsigned", 0.0),
        };
        let wire_bytes = body.len();
        let started = Instant::now();
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .map_err(|e| SendError::Unreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        let bytes = resp.bytes().await.map_err(|e| SendError::Unreachable(e.to_string()))?;
        let round_trip_ms = started.elapsed().as_secs_f64() * 1000.0;
        if status == 200 {
            let outcome: CommandOutcome = serde_json::from_slice(&bytes).map_err(|e| SendError::Status {
                status,
                message: format!("unreadable body: {e}"),
            })?;
            return Ok(Sent {
                results: outcome.results,
                verify_ms: outcome.verify_ms,
                sign_ms,
                round_trip_ms,
                wire_bytes,
            });
        }
        let body: ErrorBody = serde_json::from_slice(&bytes).unwrap_or_else(|_| ErrorBody {
            error: String::from_utf8_lossy(&bytes).into_owned(),
            kind: String::new(),
        });
        Err(match status {
            401 | 403 => SendError::Auth {
                kind: body.kind,
                message: body.error,
            },
            404 | 422 if !body.kind.is_empty() => SendError::Validation {
                kind: body.kind,
                message: body.error,
            },
            _ => SendError::Status {
                status,
                message: body.error,
            },
        })
    }
}
