//! The four simulated device kinds, their parameter schemas and the
//! command/response payloads exchanged with the emulator.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::registry::HomeRegistry;

pub const MIN_TEMPERATURE: i64 = 18;
pub const MAX_TEMPERATURE: i64 = 26;

/// Identifier of a device, e.g. `smart_bulb1`. Always `[a-z][a-z0-9_]*`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeviceId(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid device id {0:?}: expected [a-z][a-z0-9_]*")]
pub struct InvalidDeviceId(pub String);

impl DeviceId {
    pub fn new(id: impl Into<String>) -> Result<Self, InvalidDeviceId> {
        let id = id.into();
        let mut chars = id.chars();
        let valid = matches!(chars.next(), Some('a'..='z'))
            && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'));
        if valid {
            Ok(DeviceId(id))
        } else {
            Err(InvalidDeviceId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The id with its first letter upper-cased, as it appears in responses.
    pub fn capitalized(&self) -> String {
        let mut out = String::with_capacity(self.0.len());
        let mut chars = self.0.chars();
        if let Some(first) = chars.next() {
            out.push(first.to_ascii_uppercase());
        }
        out.extend(chars);
        out
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for DeviceId {
    type Err = InvalidDeviceId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DeviceId::new(s)
    }
}

impl Serialize for DeviceId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for DeviceId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        DeviceId::new(raw).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Bulb,
    Fan,
    Ac,
    Lock,
}

impl DeviceKind {
    pub const ALL: [DeviceKind; 4] = [
        DeviceKind::Bulb,
        DeviceKind::Fan,
        DeviceKind::Ac,
        DeviceKind::Lock,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceKind::Bulb => "bulb",
            DeviceKind::Fan => "fan",
            DeviceKind::Ac => "ac",
            DeviceKind::Lock => "lock",
        }
    }
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// AC vane direction. The wire form is the CSS transform the emulator applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HDirection {
    Center,
    Left,
    Right,
}

impl HDirection {
    pub const ALL: [HDirection; 3] = [HDirection::Center, HDirection::Left, HDirection::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            HDirection::Center => "rotate(0deg)",
            HDirection::Left => "rotate(-45deg)",
            HDirection::Right => "rotate(45deg)",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        HDirection::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DoorStatus {
    Locked,
    Unlocked,
}

impl DoorStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DoorStatus::Locked => "locked",
            DoorStatus::Unlocked => "unlocked",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "locked" => Some(DoorStatus::Locked),
            "unlocked" => Some(DoorStatus::Unlocked),
            _ => None,
        }
    }
}

/// Parses `#rrggbb` (either case) into its three bytes.
pub fn parse_hex_color(s: &str) -> Option<[u8; 3]> {
    let hex = s.strip_prefix('#')?;
    if hex.len() != 6 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).ok();
    Some([byte(0)?, byte(2)?, byte(4)?])
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct BulbParams {
    pub power: bool,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct FanParams {
    pub power: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct AcParams {
    pub power: bool,
    pub h_direction: String,
    pub temperature: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct LockParams {
    pub door_status: String,
}

impl AcParams {
    pub fn direction(&self) -> Option<HDirection> {
        HDirection::parse(&self.h_direction)
    }
}

impl LockParams {
    pub fn status(&self) -> Option<DoorStatus> {
        DoorStatus::parse(&self.door_status)
    }
}

/// A full parameter set for one device. Commands replace the whole set.
///
/// Values are kept in their wire form so that out-of-range or unknown
/// literals survive decoding and are reported by [`validate_command`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(untagged)]
pub enum Params {
    Bulb(BulbParams),
    Fan(FanParams),
    Ac(AcParams),
    Lock(LockParams),
}

impl Params {
    pub fn bulb(power: bool, color: &str) -> Self {
        Params::Bulb(BulbParams {
            power,
            color: color.to_ascii_lowercase(),
        })
    }

    pub fn fan(power: bool) -> Self {
        Params::Fan(FanParams { power })
    }

    pub fn ac(power: bool, direction: HDirection, temperature: i64) -> Self {
        Params::Ac(AcParams {
            power,
            h_direction: direction.as_str().to_owned(),
            temperature,
        })
    }

    pub fn lock(status: DoorStatus) -> Self {
        Params::Lock(LockParams {
            door_status: status.as_str().to_owned(),
        })
    }

    pub fn kind(&self) -> DeviceKind {
        match self {
            Params::Bulb(_) => DeviceKind::Bulb,
            Params::Fan(_) => DeviceKind::Fan,
            Params::Ac(_) => DeviceKind::Ac,
            Params::Lock(_) => DeviceKind::Lock,
        }
    }

    /// `Some(power)` for the power-style devices, `None` for the lock.
    pub fn power(&self) -> Option<bool> {
        match self {
            Params::Bulb(p) => Some(p.power),
            Params::Fan(p) => Some(p.power),
            Params::Ac(p) => Some(p.power),
            Params::Lock(_) => None,
        }
    }

    /// Value-level checks that do not depend on the registry.
    pub fn validate(&self) -> Result<(), ValidationError> {
        match self {
            Params::Bulb(p) => {
                if parse_hex_color(&p.color).is_none() {
                    return Err(ValidationError::ValueError {
                        field: "color",
                        value: p.color.clone(),
                    });
                }
            }
            Params::Fan(_) => {}
            Params::Ac(p) => {
                if p.direction().is_none() {
                    return Err(ValidationError::ValueError {
                        field: "h_direction",
                        value: p.h_direction.clone(),
                    });
                }
                if !(MIN_TEMPERATURE..=MAX_TEMPERATURE).contains(&p.temperature) {
                    return Err(ValidationError::RangeError {
                        field: "temperature",
                        value: p.temperature,
                        min: MIN_TEMPERATURE,
                        max: MAX_TEMPERATURE,
                    });
                }
            }
            Params::Lock(p) => {
                if p.status().is_none() {
                    return Err(ValidationError::ValueError {
                        field: "door_status",
                        value: p.door_status.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Storage form: hex colors lower-cased.
    pub fn normalized(&self) -> Params {
        match self {
            Params::Bulb(p) => Params::Bulb(BulbParams {
                power: p.power,
                color: p.color.to_ascii_lowercase(),
            }),
            other => other.clone(),
        }
    }

    /// Decodes a params object, selecting the kind from its key set.
    pub fn from_json(value: &Value) -> Result<Params, DecodeError> {
        let obj = value.as_object().ok_or(DecodeError::NotAnObject("params"))?;
        const KNOWN: [&str; 5] = ["power", "color", "h_direction", "temperature", "door_status"];
        if let Some(unknown) = obj.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(DecodeError::UnknownKey(unknown.clone()));
        }
        let has = |k: &str| obj.contains_key(k);
        let params = match (
            has("power"),
            has("color"),
            has("h_direction"),
            has("temperature"),
            has("door_status"),
        ) {
            (true, true, false, false, false) => Params::Bulb(BulbParams {
                power: get_bool(obj, "power")?,
                color: get_str(obj, "color")?.to_ascii_lowercase(),
            }),
            (true, false, false, false, false) => Params::Fan(FanParams {
                power: get_bool(obj, "power")?,
            }),
            (true, false, true, true, false) => Params::Ac(AcParams {
                power: get_bool(obj, "power")?,
                h_direction: get_str(obj, "h_direction")?.to_owned(),
                temperature: get_temperature(obj)?,
            }),
            (false, false, false, false, true) => Params::Lock(LockParams {
                door_status: get_str(obj, "door_status")?.to_owned(),
            }),
            _ => {
                return Err(DecodeError::UnrecognizedParams(
                    obj.keys().cloned().collect::<Vec<_>>().join(","),
                ))
            }
        };
        Ok(params)
    }
}

fn get_bool(obj: &Map<String, Value>, key: &'static str) -> Result<bool, DecodeError> {
    obj.get(key)
        .ok_or(DecodeError::MissingKey(key))?
        .as_bool()
        .ok_or(DecodeError::InvalidType(key))
}

fn get_str<'a>(obj: &'a Map<String, Value>, key: &'static str) -> Result<&'a str, DecodeError> {
    obj.get(key)
        .ok_or(DecodeError::MissingKey(key))?
        .as_str()
        .ok_or(DecodeError::InvalidType(key))
}

// The UI sends the temperature either as a number or as a numeric string.
fn get_temperature(obj: &Map<String, Value>) -> Result<i64, DecodeError> {
    match obj.get("temperature") {
        None => Err(DecodeError::MissingKey("temperature")),
        Some(Value::Number(n)) => n.as_i64().ok_or(DecodeError::InvalidType("temperature")),
        Some(Value::String(s)) => s
            .trim()
            .parse::<i64>()
            .map_err(|_| DecodeError::InvalidType("temperature")),
        Some(_) => Err(DecodeError::InvalidType("temperature")),
    }
}

impl<'de> Deserialize<'de> for Params {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        Params::from_json(&value).map_err(D::Error::custom)
    }
}

/// Current state of one device in the home.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct DeviceState {
    pub id: DeviceId,
    pub kind: DeviceKind,
    pub room: String,
    pub params: Params,
}

impl DeviceState {
    pub fn new(id: DeviceId, room: impl Into<String>, params: Params) -> Result<Self, StateError> {
        let room = room.into();
        if room.trim().is_empty() {
            return Err(StateError::EmptyRoom(id));
        }
        params
            .validate()
            .map_err(|source| StateError::InvalidParams { id: id.clone(), source })?;
        Ok(DeviceState {
            kind: params.kind(),
            params: params.normalized(),
            id,
            room,
        })
    }
}

#[derive(Deserialize)]
struct RawDeviceState {
    id: DeviceId,
    kind: DeviceKind,
    room: String,
    params: Params,
}

impl<'de> Deserialize<'de> for DeviceState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawDeviceState::deserialize(deserializer)?;
        if raw.params.kind() != raw.kind {
            return Err(D::Error::custom(format!(
                "device {} declared as {} but params are for {}",
                raw.id,
                raw.kind,
                raw.params.kind()
            )));
        }
        DeviceState::new(raw.id, raw.room, raw.params).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("device {0} has an empty room")]
    EmptyRoom(DeviceId),
    #[error("device {id} has invalid params: {source}")]
    InvalidParams { id: DeviceId, source: ValidationError },
}

/// Whole-state replacement command for one device.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct DeviceCommand {
    pub device: DeviceId,
    pub params: Params,
}

impl DeviceCommand {
    pub fn new(device: DeviceId, params: Params) -> Self {
        DeviceCommand { device, params }
    }

    pub fn from_json(value: &Value) -> Result<DeviceCommand, DecodeError> {
        let obj = value.as_object().ok_or(DecodeError::NotAnObject("command"))?;
        if let Some(unknown) = obj.keys().find(|k| *k != "device" && *k != "params") {
            return Err(DecodeError::UnknownKey(unknown.clone()));
        }
        let device = obj
            .get("device")
            .ok_or(DecodeError::MissingKey("device"))?
            .as_str()
            .ok_or(DecodeError::InvalidType("device"))?;
        let device = DeviceId::new(device)?;
        let params = Params::from_json(obj.get("params").ok_or(DecodeError::MissingKey("params"))?)?;
        Ok(DeviceCommand { device, params })
    }
}

impl<'de> Deserialize<'de> for DeviceCommand {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        DeviceCommand::from_json(&value).map_err(D::Error::custom)
    }
}

/// Acknowledgement published back by the emulator, `{"response": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceResponse {
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("device {device} is a {expected}, but params are for a {found}")]
    KindMismatch {
        device: DeviceId,
        expected: DeviceKind,
        found: DeviceKind,
    },
    #[error("{field} {value} out of range [{min}, {max}]")]
    RangeError {
        field: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },
    #[error("invalid {field} value {value:?}")]
    ValueError { field: &'static str, value: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("{0} must be a JSON object")]
    NotAnObject(&'static str),
    #[error("missing key {0:?}")]
    MissingKey(&'static str),
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("wrong type for {0:?}")]
    InvalidType(&'static str),
    #[error("params keys [{0}] do not match any device schema")]
    UnrecognizedParams(String),
    #[error(transparent)]
    DeviceId(#[from] InvalidDeviceId),
}

pub fn validate_command(registry: &HomeRegistry, cmd: &DeviceCommand) -> Result<(), ValidationError> {
    let device = registry
        .device(&cmd.device)
        .ok_or_else(|| ValidationError::UnknownDevice(cmd.device.to_string()))?;
    if device.kind != cmd.params.kind() {
        return Err(ValidationError::KindMismatch {
            device: cmd.device.clone(),
            expected: device.kind,
            found: cmd.params.kind(),
        });
    }
    cmd.params.validate()
}

/// Applies a validated command. The previous params are discarded entirely.
pub fn apply_command(state: &DeviceState, cmd: &DeviceCommand) -> (DeviceState, DeviceResponse) {
    debug_assert_eq!(state.id, cmd.device);
    let next = DeviceState {
        id: state.id.clone(),
        kind: state.kind,
        room: state.room.clone(),
        params: cmd.params.normalized(),
    };
    let response = response_for(&next);
    (next, response)
}

/// Response text for a device that has just been set to `state`.
pub fn response_for(state: &DeviceState) -> DeviceResponse {
    let name = state.id.capitalized();
    let response = match &state.params {
        Params::Lock(p) => match p.status() {
            Some(DoorStatus::Unlocked) => format!("{name} Unlocked"),
            _ => format!("{name} Locked"),
        },
        other => {
            let on = if other.power() == Some(true) { "On" } else { "Off" };
            format!("{name} Turned {on} in {}", state.room)
        }
    };
    DeviceResponse { response }
}

pub fn encode_payload(cmd: &DeviceCommand) -> Vec<u8> {
    serde_json::to_vec(cmd).expect("command serialization is infallible")
}

pub fn decode_payload(raw: &[u8]) -> Result<DeviceCommand, DecodeError> {
    let value: Value = serde_json::from_slice(raw).map_err(|e| DecodeError::Json(e.to_string()))?;
    DeviceCommand::from_json(&value)
}
