//! Presence announcements exchanged on the connection topic.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresenceStatus {
    Connected,
    Disconnected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Presence {
    pub client_id: String,
    /// `emulator`, `gateway`, `client` or anything else a peer calls itself.
    pub role: String,
    pub status: PresenceStatus,
}

impl Presence {
    pub fn connected(client_id: impl Into<String>, role: impl Into<String>) -> Self {
        Presence {
            client_id: client_id.into(),
            role: role.into(),
            status: PresenceStatus::Connected,
        }
    }

    pub fn disconnected(client_id: impl Into<String>, role: impl Into<String>) -> Self {
        Presence {
            status: PresenceStatus::Disconnected,
            ..Presence::connected(client_id, role)
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("presence serialization is infallible")
    }

    pub fn from_bytes(raw: &[u8]) -> Option<Self> {
        serde_json::from_slice(raw).ok()
    }

    /// Human-readable form for connection log lines.
    pub fn describe(&self) -> String {
        let status = match self.status {
            PresenceStatus::Connected => "connected",
            PresenceStatus::Disconnected => "disconnected",
        };
        format!("{} {} {status}", self.role, self.client_id)
    }
}
