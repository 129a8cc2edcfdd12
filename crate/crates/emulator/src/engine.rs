use std::sync::Arc;
use std::time::{Duration, Instant};

use hearthwire_core::canonical::to_canonical_bytes;
use hearthwire_core::device::response_for;
use hearthwire_core::{
    decode_payload, encode_payload, validate_command, Clock, DeviceCommand, DeviceId, DeviceResponse, EventLog,
    HomeRegistry, HomeState, LogLevel, SystemClock,
};
use hearthwire_mqtt::Endpoint;
use parking_lot::{Mutex, RwLock};
use thiserror::Error;

pub const MIN_POLL_INTERVAL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone)]
pub enum EmulatorMode {
    /// Poll `{gateway}/api/state`.
    HttpPoll { gateway: String },
    Mqtt { broker: Endpoint },
}

#[derive(Debug, Clone)]
pub struct EmulatorConfig {
    pub mode: EmulatorMode,
    pub poll_interval: Duration,
    pub registry: HomeRegistry,
    pub client_id: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("poll interval {0:?} is below the 50 ms minimum")]
    PollIntervalTooShort(Duration),
}

impl EmulatorConfig {
    pub fn http_poll(gateway: impl Into<String>) -> Self {
        EmulatorConfig {
            mode: EmulatorMode::HttpPoll {
                gateway: gateway.into(),
            },
            poll_interval: Duration::from_millis(500),
            registry: HomeRegistry::default_home(),
            client_id: "emulator".into(),
        }
    }

    pub fn mqtt(broker: Endpoint) -> Self {
        EmulatorConfig {
            mode: EmulatorMode::Mqtt { broker },
            ..Self::http_poll("")
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if matches!(self.mode, EmulatorMode::HttpPoll { .. }) && self.poll_interval < MIN_POLL_INTERVAL {
            return Err(ConfigError::PollIntervalTooShort(self.poll_interval));
        }
        Ok(())
    }
}

struct Inner {
    registry: HomeRegistry,
    state: RwLock<HomeState>,
    log: EventLog,
    last_handling: Mutex<Option<Duration>>,
}

/// Emulator-side device state plus its event log. Cheap to clone; every
/// clone shares the same state.
#[derive(Clone)]
pub struct Emulator {
    inner: Arc<Inner>,
}

impl Emulator {
    pub fn new(registry: HomeRegistry) -> Self {
        Self::with_clock(registry, Arc::new(SystemClock))
    }

    pub fn with_clock(registry: HomeRegistry, clock: Arc<dyn Clock>) -> Self {
        let state = registry.initial_state();
        Emulator {
            inner: Arc::new(Inner {
                registry,
                state: RwLock::new(state),
                log: EventLog::new(clock),
                last_handling: Mutex::new(None),
            }),
        }
    }

    pub fn registry(&self) -> &HomeRegistry {
        &self.inner.registry
    }

    pub fn log(&self) -> &EventLog {
        &self.inner.log
    }

    pub fn snapshot(&self) -> HomeState {
        self.inner.state.read().clone()
    }

    /// How long the most recent MQTT command took to validate and apply.
    pub fn last_handling(&self) -> Option<Duration> {
        *self.inner.last_handling.lock()
    }

    /// Takes over every registered device whose params differ from `remote`
    /// and returns the ids that changed. Devices the registry does not know,
    /// and params that fail validation, are logged and skipped.
    pub fn sync_from(&self, remote: &HomeState) -> Vec<DeviceId> {
        let mut changed = Vec::new();
        let mut state = self.inner.state.write();
        for incoming in &remote.devices {
            let cmd = DeviceCommand::new(incoming.id.clone(), incoming.params.clone());
            if let Err(e) = validate_command(&self.inner.registry, &cmd) {
                self.inner
                    .log
                    .push(LogLevel::Error, format!("Ignoring state for {}: {e}", incoming.id));
                continue;
            }
            let Some(local) = state.device_mut(&incoming.id) else {
                continue;
            };
            if canonical(&local.params) == canonical(&incoming.params) {
                continue;
            }
            local.params = incoming.params.normalized();
            self.inner.log.push(LogLevel::Action, response_for(local).response);
            changed.push(incoming.id.clone());
        }
        changed
    }

    /// Handles one payload published on `topic`. Returns the response to
    /// publish back, or `None` if nothing was applied.
    pub fn handle_payload(&self, topic: &str, payload: &[u8]) -> Option<DeviceResponse> {
        let started = Instant::now();
        let log = &self.inner.log;
        let topic_device = self.inner.registry.device_for_topic(topic)?;
        let cmd = match decode_payload(payload) {
            Ok(cmd) => cmd,
            Err(e) => {
                log.push(LogLevel::Error, format!("Malformed payload on {topic}: {e}"));
                return None;
            }
        };
        if cmd.device != topic_device {
            log.push(
                LogLevel::Error,
                format!("Payload for {} published on the topic of {topic_device}", cmd.device),
            );
            return None;
        }
        let result = self
            .inner
            .state
            .write()
            .apply_all(&self.inner.registry, std::slice::from_ref(&cmd));
        match result {
            Ok(mut responses) => {
                let response = responses.remove(0);
                let payload = String::from_utf8_lossy(&encode_payload(&cmd)).into_owned();
                log.push(LogLevel::Command, format!("Command received: {topic}: {payload}"));
                *self.inner.last_handling.lock() = Some(started.elapsed());
                Some(response)
            }
            Err(e) => {
                log.push(LogLevel::Error, format!("Rejected command on {topic}: {e}"));
                None
            }
        }
    }
}

fn canonical(params: &hearthwire_core::Params) -> Vec<u8> {
    to_canonical_bytes(&serde_json::to_value(params.normalized()).expect("params serialization is infallible"))
}
