//! The device gateway: authoritative device state behind a signed-intent
//! HTTP API, with an optional bridge onto MQTT device topics.

pub mod bridge;
pub mod gateway;
pub mod http;
pub mod keys;

pub use bridge::{spawn_mqtt_bridge, BridgeHandle, BridgeOptions};
pub use gateway::{CommandError, CommandOutcome, DeviceStatus, Gateway, GatewayConfig};
pub use http::{router, GatewayServer, ROLE_HEADER};
pub use keys::{KeyError, KeySource};
