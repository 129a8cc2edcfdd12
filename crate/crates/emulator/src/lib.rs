//! Headless home emulator. It mirrors device state from the gateway (HTTP
//! polling) or acts on MQTT device topics directly, and keeps an event log.

pub mod engine;
pub mod http;
pub mod mqtt;
pub mod poll;

pub use engine::{ConfigError, Emulator, EmulatorConfig, EmulatorMode, MIN_POLL_INTERVAL};
pub use http::{router, EmulatorServer};
pub use mqtt::{run_mqtt, MqttHandle};
pub use poll::{run_http_poll, PollError, PollReport, Poller};
