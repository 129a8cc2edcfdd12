use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use hearthwire_core::device::{encode_payload, DeviceKind};
use hearthwire_core::{
    verify_intent, Clock, DeviceCommand, DeviceId, DeviceResponse, DeviceState, EventLog, HashAlg, HomeRegistry,
    HomeState, IntentEnvelope, LogLevel, SignedIntentPacket, SystemClock, ValidationError, Verdict,
};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keys::{KeyError, KeySource};

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Largest accepted |now - issued_at|; `None` accepts any age.
    pub freshness_window: Option<Duration>,
    pub hash_alg: HashAlg,
    /// Serve `POST /api/command/unsigned` (benchmarking only).
    pub allow_unsigned: bool,
    /// Expected emulator poll interval; the emulator counts as online while
    /// it has been seen within three of these.
    pub poll_interval: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            freshness_window: Some(Duration::from_secs(30)),
            hash_alg: HashAlg::Md5,
            allow_unsigned: false,
            poll_interval: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("signature does not verify")]
    SignatureInvalid,
    #[error("malformed signature: {0}")]
    MalformedSignature(String),
    #[error("unknown client {0:?}")]
    UnknownClient(String),
    #[error("intent issued at {issued_at} is outside the freshness window ({window_ms} ms) at {now}")]
    StaleIntent { issued_at: u64, now: u64, window_ms: u64 },
    #[error("key service unavailable: {0}")]
    KeyServiceUnavailable(String),
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("{0}")]
    Validation(ValidationError),
    #[error("bad request: {0}")]
    BadRequest(String),
}

impl CommandError {
    /// Stable machine-readable tag used in HTTP error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            CommandError::SignatureInvalid => "signature_invalid",
            CommandError::MalformedSignature(_) => "malformed_signature",
            CommandError::UnknownClient(_) => "unknown_client",
            CommandError::StaleIntent { .. } => "stale_intent",
            CommandError::KeyServiceUnavailable(_) => "key_service_unavailable",
            CommandError::UnknownDevice(_) => "unknown_device",
            CommandError::Validation(_) => "validation_error",
            CommandError::BadRequest(_) => "bad_request",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            CommandError::SignatureInvalid
            | CommandError::MalformedSignature(_)
            | CommandError::UnknownClient(_)
            | CommandError::StaleIntent { .. } => 401,
            CommandError::KeyServiceUnavailable(_) => 502,
            CommandError::UnknownDevice(_) => 404,
            CommandError::Validation(_) => 422,
            CommandError::BadRequest(_) => 400,
        }
    }
}

impl From<ValidationError> for CommandError {
    fn from(e: ValidationError) -> Self {
        match e {
            ValidationError::UnknownDevice(id) => CommandError::UnknownDevice(id),
            other => CommandError::Validation(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandOutcome {
    pub results: Vec<DeviceResponse>,
    /// Time spent fetching the key and checking the signature.
    pub verify_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceStatus {
    pub id: DeviceId,
    pub kind: DeviceKind,
    pub room: String,
    pub online: bool,
}

struct Inner {
    registry: HomeRegistry,
    state: RwLock<HomeState>,
    log: EventLog,
    clock: Arc<dyn Clock>,
    keys: KeySource,
    config: GatewayConfig,
    emulator_seen_at: AtomicU64,
}

/// The authoritative device state and the command pipeline in front of it.
#[derive(Clone)]
pub struct Gateway {
    inner: Arc<Inner>,
}

impl Gateway {
    pub fn new(registry: HomeRegistry, keys: KeySource, config: GatewayConfig) -> Self {
        Self::with_clock(registry, keys, config, Arc::new(SystemClock))
    }

    pub fn with_clock(registry: HomeRegistry, keys: KeySource, config: GatewayConfig, clock: Arc<dyn Clock>) -> Self {
        let state = registry.initial_state();
        // A freshly started gateway assumes its emulator is attached.
        let now = clock.now_ms();
        Gateway {
            inner: Arc::new(Inner {
                registry,
                state: RwLock::new(state),
                log: EventLog::new(clock.clone()),
                clock,
                keys,
                config,
                emulator_seen_at: AtomicU64::new(now),
            }),
        }
    }

    pub fn registry(&self) -> &HomeRegistry {
        &self.inner.registry
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.inner.config
    }

    pub fn log(&self) -> &EventLog {
        &self.inner.log
    }

    pub fn keys(&self) -> &KeySource {
        &self.inner.keys
    }

    pub fn state(&self) -> HomeState {
        self.inner.state.read().clone()
    }

    pub fn device_state(&self, id: &DeviceId) -> Option<DeviceState> {
        self.inner.state.read().device(id).cloned()
    }

    pub fn mark_emulator_seen(&self) {
        self.inner.emulator_seen_at.store(self.inner.clock.now_ms(), Ordering::Relaxed);
    }

    pub fn mark_emulator_gone(&self) {
        self.inner.emulator_seen_at.store(0, Ordering::Relaxed);
    }

    pub fn emulator_online(&self) -> bool {
        let window = 3 * self.inner.config.poll_interval.as_millis() as u64;
        let seen = self.inner.emulator_seen_at.load(Ordering::Relaxed);
        seen > 0 && self.inner.clock.now_ms().saturating_sub(seen) <= window
    }

    /// One entry per registered device.
    pub fn status(&self) -> Vec<DeviceStatus> {
        let online = self.emulator_online();
        self.inner
            .registry
            .devices()
            .iter()
            .map(|d| DeviceStatus {
                id: d.id.clone(),
                kind: d.kind,
                room: d.room.clone(),
                online,
            })
            .collect()
    }

    /// Full signed-intent pipeline: freshness, key lookup, signature check,
    /// then an all-or-nothing apply.
    pub async fn handle_command(&self, packet: &SignedIntentPacket) -> Result<CommandOutcome, CommandError> {
        let client = packet.envelope.client_id.clone();
        let result = self.verify(packet).await;
        let verify_ms = match result {
            Ok(ms) => ms,
            Err(e) => {
                self.inner.log.push(LogLevel::Error, format!("Rejected intent from {client}: {e}"));
                return Err(e);
            }
        };
        let results = self.apply(&packet.envelope)?;
        Ok(CommandOutcome { results, verify_ms })
    }

    /// Applies an intent without any signature check (the unsigned HTTP mode).
    pub fn handle_unsigned(&self, envelope: &IntentEnvelope) -> Result<CommandOutcome, CommandError> {
        let results = self.apply(envelope)?;
        Ok(CommandOutcome { results, verify_ms: 0.0 })
    }

    async fn verify(&self, packet: &SignedIntentPacket) -> Result<f64, CommandError> {
        let env = &packet.envelope;
        if let Some(window) = self.inner.config.freshness_window {
            let now = self.inner.clock.now_ms();
            let window_ms = window.as_millis() as u64;
            if now.abs_diff(env.issued_at) > window_ms {
                return Err(CommandError::StaleIntent {
                    issued_at: env.issued_at,
                    now,
                    window_ms,
                });
            }
        }
        let started = Instant::now();
        let key = self
            .inner
            .keys
            .resolve(&env.client_id, &self.inner.clock)
            .await
            .map_err(|e| match e {
                KeyError::UnknownClient(id) => CommandError::UnknownClient(id),
                KeyError::Unavailable(msg) => CommandError::KeyServiceUnavailable(msg),
            })?;
        let verdict = verify_intent(packet, &key, self.inner.config.hash_alg)
            .map_err(|e| CommandError::MalformedSignature(e.to_string()))?;
        let elapsed = started.elapsed().as_secs_f64() * 1000.0;
        match verdict {
            Verdict::Valid => Ok(elapsed),
            Verdict::Invalid => {
                // A rotated key may be hiding behind the cache.
                self.inner.keys.invalidate(&env.client_id);
                Err(CommandError::SignatureInvalid)
            }
        }
    }

    fn apply(&self, envelope: &IntentEnvelope) -> Result<Vec<DeviceResponse>, CommandError> {
        self.apply_commands(&envelope.client_id, &envelope.commands)
    }

    /// Validates and applies `commands` atomically, logging one command and
    /// one response entry per applied command.
    pub fn apply_commands(&self, source: &str, commands: &[DeviceCommand]) -> Result<Vec<DeviceResponse>, CommandError> {
        let mut state = self.inner.state.write();
        match state.apply_all(&self.inner.registry, commands) {
            Ok(responses) => {
                for (cmd, resp) in commands.iter().zip(&responses) {
                    let payload = String::from_utf8_lossy(&encode_payload(cmd)).into_owned();
                    self.inner
                        .log
                        .push(LogLevel::Command, format!("Command received from {source}: {payload}"));
                    self.inner.log.push(LogLevel::Response, resp.response.clone());
                }
                Ok(responses)
            }
            Err(e) => {
                drop(state);
                self.inner
                    .log
                    .push(LogLevel::Error, format!("Rejected intent from {source}: {e}"));
                Err(e.into())
            }
        }
    }
}
