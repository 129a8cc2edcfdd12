//! Client side of the testbed: a signed-intent sender for the gateway's HTTP
//! API and an MQTT commander that publishes device payloads and waits for
//! the emulator's answer.

pub mod commander;
pub mod sender;

pub use commander::{CommanderError, MqttCommander, Reply};
pub use sender::{HttpSender, SendError, Sent};

/// Process exit codes shared by every command-line front end.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const AUTH: i32 = 3;
    pub const VALIDATION: i32 = 4;
    pub const CONNECTIVITY: i32 = 5;
}
