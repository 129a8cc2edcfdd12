//! The set of devices in a home and the topic namespace they live under.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{
    apply_command, validate_command, DeviceCommand, DeviceId, DeviceKind, DeviceResponse, DeviceState, DoorStatus,
    HDirection, Params, StateError, ValidationError,
};

pub const DEFAULT_TOPIC_PREFIX: &str = "ELL893/muneeb_majid/smarthome/mqtt";
pub const CONNECTION_TOPIC_LEVEL: &str = "connection";

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("failed to read registry file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed registry file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate device id {0}")]
    DuplicateId(DeviceId),
    #[error("device {id} declared as {declared} but initial_params are for {found}")]
    KindMismatch {
        id: DeviceId,
        declared: DeviceKind,
        found: DeviceKind,
    },
    #[error("device id {0} collides with the connection topic")]
    ReservedId(DeviceId),
    #[error("topic prefix {0:?} must be non-empty and free of wildcards")]
    BadPrefix(String),
    #[error(transparent)]
    State(#[from] StateError),
}

/// One entry of the registry config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub id: DeviceId,
    pub kind: DeviceKind,
    pub room: String,
    pub initial_params: Params,
}

/// On-disk registry format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistryConfig {
    #[serde(default = "default_prefix")]
    pub topic_prefix: String,
    pub devices: Vec<DeviceConfig>,
    /// Floorplan placement for the browser UI; carried through untouched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<serde_json::Value>,
}

fn default_prefix() -> String {
    DEFAULT_TOPIC_PREFIX.to_owned()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomeRegistry {
    topic_prefix: String,
    devices: Vec<DeviceState>,
    layout: Option<serde_json::Value>,
}

impl HomeRegistry {
    pub fn from_config(config: RegistryConfig) -> Result<Self, RegistryError> {
        let prefix = config.topic_prefix.trim_end_matches('/').to_owned();
        if prefix.is_empty() || prefix.contains(['+', '#']) {
            return Err(RegistryError::BadPrefix(config.topic_prefix));
        }
        let mut seen = HashSet::new();
        let mut devices = Vec::with_capacity(config.devices.len());
        for dev in config.devices {
            if dev.id.as_str() == CONNECTION_TOPIC_LEVEL {
                return Err(RegistryError::ReservedId(dev.id));
            }
            if !seen.insert(dev.id.clone()) {
                return Err(RegistryError::DuplicateId(dev.id));
            }
            if dev.initial_params.kind() != dev.kind {
                return Err(RegistryError::KindMismatch {
                    found: dev.initial_params.kind(),
                    declared: dev.kind,
                    id: dev.id,
                });
            }
            devices.push(DeviceState::new(dev.id, dev.room, dev.initial_params)?);
        }
        Ok(HomeRegistry {
            topic_prefix: prefix,
            devices,
            layout: config.layout,
        })
    }

    pub fn from_json(raw: &[u8]) -> Result<Self, RegistryError> {
        Self::from_config(serde_json::from_slice(raw)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        Self::from_json(&std::fs::read(path)?)
    }

    /// Bulb, fan, AC and lock with everything switched off and the door locked.
    pub fn default_home() -> Self {
        let dev = |id: &str, room: &str, params: Params| {
            DeviceState::new(DeviceId::new(id).unwrap(), room, params).unwrap()
        };
        HomeRegistry {
            topic_prefix: DEFAULT_TOPIC_PREFIX.to_owned(),
            devices: vec![
                dev("smart_bulb1", "living room", Params::bulb(false, "#ffffff")),
                dev("smart_fan1", "living room", Params::fan(false)),
                dev("smart_ac1", "bedroom", Params::ac(false, HDirection::Center, 20)),
                dev("smart_lock1", "main door", Params::lock(DoorStatus::Locked)),
            ],
            layout: None,
        }
    }

    pub fn with_topic_prefix(mut self, prefix: &str) -> Result<Self, RegistryError> {
        let trimmed = prefix.trim_end_matches('/');
        if trimmed.is_empty() || trimmed.contains(['+', '#']) {
            return Err(RegistryError::BadPrefix(prefix.to_owned()));
        }
        self.topic_prefix = trimmed.to_owned();
        Ok(self)
    }

    pub fn to_config(&self) -> RegistryConfig {
        RegistryConfig {
            topic_prefix: self.topic_prefix.clone(),
            devices: self
                .devices
                .iter()
                .map(|d| DeviceConfig {
                    id: d.id.clone(),
                    kind: d.kind,
                    room: d.room.clone(),
                    initial_params: d.params.clone(),
                })
                .collect(),
            layout: self.layout.clone(),
        }
    }

    pub fn topic_prefix(&self) -> &str {
        &self.topic_prefix
    }

    /// Devices with their initial params, in registry order.
    pub fn devices(&self) -> &[DeviceState] {
        &self.devices
    }

    pub fn device(&self, id: &DeviceId) -> Option<&DeviceState> {
        self.devices.iter().find(|d| &d.id == id)
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn initial_state(&self) -> HomeState {
        HomeState {
            devices: self.devices.clone(),
        }
    }

    pub fn device_topic(&self, id: &DeviceId) -> String {
        format!("{}/{}", self.topic_prefix, id)
    }

    pub fn connection_topic(&self) -> String {
        format!("{}/{}", self.topic_prefix, CONNECTION_TOPIC_LEVEL)
    }

    /// Filter covering every device topic (and the connection topic).
    pub fn device_filter(&self) -> String {
        format!("{}/+", self.topic_prefix)
    }

    /// Maps a topic back to a device id if it is `{prefix}/{id}`.
    pub fn device_for_topic(&self, topic: &str) -> Option<DeviceId> {
        let rest = topic.strip_prefix(&self.topic_prefix)?.strip_prefix('/')?;
        if rest.contains('/') {
            return None;
        }
        DeviceId::new(rest).ok()
    }
}

/// Snapshot of every device in a home, in registry order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HomeState {
    pub devices: Vec<DeviceState>,
}

impl HomeState {
    pub fn device(&self, id: &DeviceId) -> Option<&DeviceState> {
        self.devices.iter().find(|d| &d.id == id)
    }

    pub fn device_mut(&mut self, id: &DeviceId) -> Option<&mut DeviceState> {
        self.devices.iter_mut().find(|d| &d.id == id)
    }

    /// Validates every command against `registry` and only then applies them
    /// in order, so either all take effect or none do.
    pub fn apply_all(
        &mut self,
        registry: &HomeRegistry,
        commands: &[DeviceCommand],
    ) -> Result<Vec<DeviceResponse>, ValidationError> {
        for cmd in commands {
            validate_command(registry, cmd)?;
            if self.device(&cmd.device).is_none() {
                return Err(ValidationError::UnknownDevice(cmd.device.to_string()));
            }
        }
        let mut responses = Vec::with_capacity(commands.len());
        for cmd in commands {
            let slot = self.device_mut(&cmd.device).expect("checked above");
            let (next, response) = apply_command(slot, cmd);
            *slot = next;
            responses.push(response);
        }
        Ok(responses)
    }

    /// Stable digest of the snapshot, used to detect any mutation.
    pub fn state_hash(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let canonical = crate::canonical::to_canonical_bytes(
            &serde_json::to_value(self).expect("state serialization is infallible"),
        );
        Sha256::digest(canonical).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_home_rooms() {
        let reg = HomeRegistry::default_home();
        let room = |id: &str| reg.device(&DeviceId::new(id).unwrap()).unwrap().room.clone();
        assert_eq!(room("smart_bulb1"), "living room");
        assert_eq!(room("smart_ac1"), "bedroom");
        assert_eq!(room("smart_fan1"), "living room");
        assert_eq!(room("smart_lock1"), "main door");
        assert_eq!(reg.topic_prefix(), DEFAULT_TOPIC_PREFIX);
    }

    #[test]
    fn config_round_trip() {
        let reg = HomeRegistry::default_home();
        let json = serde_json::to_vec(&reg.to_config()).unwrap();
        assert_eq!(HomeRegistry::from_json(&json).unwrap(), reg);
    }

    #[test]
    fn loads_config_file() {
        let raw = r##"{
            "topic_prefix": "home/test/",
            "devices": [
                {"id":"porch_light","kind":"bulb","room":"porch","initial_params":{"power":true,"color":"#FF8800"}},
                {"id":"front_door","kind":"lock","room":"entrance","initial_params":{"door_status":"unlocked"}}
            ],
            "layout": {"porch_light": {"x": 10, "y": 20}}
        }"##;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("home.json");
        std::fs::write(&path, raw).unwrap();
        let reg = HomeRegistry::load(&path).unwrap();
        assert_eq!(reg.topic_prefix(), "home/test");
        assert_eq!(reg.len(), 2);
        let porch = reg.device(&DeviceId::new("porch_light").unwrap()).unwrap();
        assert_eq!(porch.params, Params::bulb(true, "#ff8800"));
        assert_eq!(reg.device_topic(&porch.id), "home/test/porch_light");
        assert_eq!(reg.connection_topic(), "home/test/connection");
        assert!(reg.to_config().layout.is_some());
    }

    #[test]
    fn rejects_bad_configs() {
        let dup = r#"{"devices":[
            {"id":"a","kind":"fan","room":"r","initial_params":{"power":true}},
            {"id":"a","kind":"fan","room":"r","initial_params":{"power":false}}]}"#;
        assert!(matches!(HomeRegistry::from_json(dup.as_bytes()), Err(RegistryError::DuplicateId(_))));
        let mismatch = r#"{"devices":[{"id":"a","kind":"bulb","room":"r","initial_params":{"power":true}}]}"#;
        assert!(matches!(
            HomeRegistry::from_json(mismatch.as_bytes()),
            Err(RegistryError::KindMismatch { .. })
        ));
        let hot = r#"{"devices":[{"id":"a","kind":"ac","room":"r","initial_params":{"power":true,"h_direction":"rotate(0deg)","temperature":40}}]}"#;
        assert!(matches!(HomeRegistry::from_json(hot.as_bytes()), Err(RegistryError::State(_))));
        let no_room = r#"{"devices":[{"id":"a","kind":"fan","room":" ","initial_params":{"power":true}}]}"#;
        assert!(HomeRegistry::from_json(no_room.as_bytes()).is_err());
        let reserved = r#"{"devices":[{"id":"connection","kind":"fan","room":"r","initial_params":{"power":true}}]}"#;
        assert!(matches!(HomeRegistry::from_json(reserved.as_bytes()), Err(RegistryError::ReservedId(_))));
        let wild = r#"{"topic_prefix":"a/+","devices":[]}"#;
        assert!(matches!(HomeRegistry::from_json(wild.as_bytes()), Err(RegistryError::BadPrefix(_))));
    }

    #[test]
    fn topic_to_device() {
        let reg = HomeRegistry::default_home();
        let t = reg.device_topic(&DeviceId::new("smart_fan1").unwrap());
        assert_eq!(reg.device_for_topic(&t).unwrap().as_str(), "smart_fan1");
        assert!(reg.device_for_topic("other/smart_fan1").is_none());
        assert!(reg.device_for_topic(&format!("{t}/extra")).is_none());
    }
}
