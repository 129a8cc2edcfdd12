//! Intents: one or more device commands issued by a client, and their
//! signed HTTP wire form.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::to_canonical_bytes;
use crate::device::{DeviceCommand, DecodeError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct IntentEnvelope {
    pub client_id: String,
    pub issued_at: u64,
    pub commands: Vec<DeviceCommand>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvelopeError {
    #[error("client_id must be non-empty")]
    EmptyClientId,
    #[error("an intent needs at least one command")]
    NoCommands,
    #[error("malformed envelope: {0}")]
    Decode(String),
    #[error(transparent)]
    Command(#[from] DecodeError),
}

impl IntentEnvelope {
    pub fn new(client_id: impl Into<String>, commands: Vec<DeviceCommand>, issued_at: u64) -> Result<Self, EnvelopeError> {
        let client_id = client_id.into();
        if client_id.is_empty() {
            return Err(EnvelopeError::EmptyClientId);
        }
        if commands.is_empty() {
            return Err(EnvelopeError::NoCommands);
        }
        Ok(IntentEnvelope {
            client_id,
            issued_at,
            commands,
        })
    }

    pub fn is_composite(&self) -> bool {
        self.commands.len() > 1
    }

    pub fn from_json(value: &Value) -> Result<Self, EnvelopeError> {
        let obj = value
            .as_object()
            .ok_or_else(|| EnvelopeError::Decode("envelope must be an object".into()))?;
        if let Some(k) = obj
            .keys()
            .find(|k| !matches!(k.as_str(), "client_id" | "issued_at" | "commands"))
        {
            return Err(EnvelopeError::Decode(format!("unknown key {k:?}")));
        }
        let client_id = obj
            .get("client_id")
            .and_then(Value::as_str)
            .ok_or_else(|| EnvelopeError::Decode("client_id must be a string".into()))?;
        let issued_at = obj
            .get("issued_at")
            .and_then(Value::as_u64)
            .ok_or_else(|| EnvelopeError::Decode("issued_at must be unix milliseconds".into()))?;
        let commands = obj
            .get("commands")
            .and_then(Value::as_array)
            .ok_or_else(|| EnvelopeError::Decode("commands must be an array".into()))?
            .iter()
            .map(DeviceCommand::from_json)
            .collect::<Result<Vec<_>, _>>()?;
        IntentEnvelope::new(client_id, commands, issued_at)
    }
}

impl<'de> Deserialize<'de> for IntentEnvelope {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        IntentEnvelope::from_json(&value).map_err(D::Error::custom)
    }
}

/// The bytes that get hashed and signed. Equal envelopes always give equal bytes.
pub fn canonical_bytes(envelope: &IntentEnvelope) -> Vec<u8> {
    to_canonical_bytes(&serde_json::to_value(envelope).expect("envelope serialization is infallible"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedIntentPacket {
    pub envelope: IntentEnvelope,
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PacketError {
    #[error("malformed packet: {0}")]
    Json(String),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error("malformed signature: {0}")]
    MalformedSignature(String),
}

#[derive(Serialize)]
struct WirePacket<'a> {
    envelope: &'a IntentEnvelope,
    #[serde(skip_serializing_if = "Option::is_none")]
    signature: Option<String>,
}

impl SignedIntentPacket {
    /// `{"envelope":{...},"signature":"<base64>"}`
    pub fn to_wire(&self) -> Vec<u8> {
        encode_wire(&self.envelope, Some(&self.signature))
    }

    pub fn from_wire(raw: &[u8]) -> Result<Self, PacketError> {
        let (envelope, signature) = decode_wire(raw)?;
        let signature = signature.ok_or_else(|| PacketError::MalformedSignature("missing signature".into()))?;
        Ok(SignedIntentPacket { envelope, signature })
    }
}

/// Wire form of an intent sent without a signature (`{"envelope":{...}}`).
pub fn unsigned_wire(envelope: &IntentEnvelope) -> Vec<u8> {
    encode_wire(envelope, None)
}

pub fn decode_unsigned_wire(raw: &[u8]) -> Result<IntentEnvelope, PacketError> {
    decode_wire(raw).map(|(env, _)| env)
}

fn encode_wire(envelope: &IntentEnvelope, signature: Option<&[u8]>) -> Vec<u8> {
    serde_json::to_vec(&WirePacket {
        envelope,
        signature: signature.map(|s| BASE64.encode(s)),
    })
    .expect("packet serialization is infallible")
}

fn decode_wire(raw: &[u8]) -> Result<(IntentEnvelope, Option<Vec<u8>>), PacketError> {
    let value: Value = serde_json::from_slice(raw).map_err(|e| PacketError::Json(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| PacketError::Json("packet must be an object".into()))?;
    if let Some(k) = obj.keys().find(|k| *k != "envelope" && *k != "signature") {
        return Err(PacketError::Json(format!("unknown key {k:?}")));
    }
    let envelope = IntentEnvelope::from_json(
        obj.get("envelope")
            .ok_or_else(|| PacketError::Json("missing envelope".into()))?,
    )?;
    let signature = match obj.get("signature") {
        None => None,
        Some(Value::String(s)) => Some(
            BASE64
                .decode(s)
                .map_err(|e| PacketError::MalformedSignature(e.to_string()))?,
        ),
        Some(_) => return Err(PacketError::MalformedSignature("signature must be a base64 string".into())),
    };
    Ok((envelope, signature))
}
