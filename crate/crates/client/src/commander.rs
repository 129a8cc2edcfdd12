use std::collections::HashSet;
use std::time::{Duration, Instant};

use hearthwire_core::{
    decode_payload, encode_payload, validate_command, DeviceCommand, DeviceResponse, EventLog, HomeRegistry, LogLevel, Presence,
    ValidationError,
};
use hearthwire_mqtt::codec::ConnectReturnCode;
use hearthwire_mqtt::{connect, ClientError, ClientOptions, Endpoint, Incoming, LastWill, MqttClient, QoS};
use thiserror::Error;

use crate::exit;

pub const ROLE: &str = "client";

#[derive(Debug, Error)]
pub enum CommanderError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("not authorized: {0}")]
    Denied(String),
    #[error("broker unreachable: {0}")]
    Unreachable(String),
    #[error("no response on {topic} within {timeout:?}")]
    NoResponse { topic: String, timeout: Duration },
}

impl CommanderError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommanderError::Validation(_) | CommanderError::Malformed(_) => exit::VALIDATION,
            CommanderError::Denied(_) => exit::AUTH,
            CommanderError::Unreachable(_) | CommanderError::NoResponse { .. } => exit::CONNECTIVITY,
        }
    }
}

impl From<ClientError> for CommanderError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Refused(ConnectReturnCode::NotAuthorized | ConnectReturnCode::BadUsernameOrPassword) => {
                CommanderError::Denied(e.to_string())
            }
            ClientError::SubscriptionRejected(_) => CommanderError::Denied(e.to_string()),
            other => CommanderError::Unreachable(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reply {
    pub response: DeviceResponse,
    pub topic: String,
    /// Publish to response arrival.
    pub round_trip: Duration,
    /// Size of the published payload.
    pub wire_bytes: usize,
}

/// Publishes device payloads on their topics and waits for the emulator's
/// `{"response": ...}` on the same topic.
pub struct MqttCommander {
    client: MqttClient,
    incoming: Incoming,
    registry: HomeRegistry,
    log: EventLog,
    subscribed: HashSet<String>,
    timeout: Duration,
}

impl MqttCommander {
    pub async fn connect(endpoint: &Endpoint, client_id: &str, registry: HomeRegistry) -> Result<Self, CommanderError> {
        let log = EventLog::default();
        let connection_topic = registry.connection_topic();
        let opts = ClientOptions::new(client_id).will(LastWill {
            topic: connection_topic.clone(),
            payload: Presence::disconnected(client_id, ROLE).to_bytes(),
            qos: QoS::AtMostOnce,
            retain: false,
        });
        let (client, incoming) = connect(endpoint, opts).await?;
        client
            .publish(&connection_topic, Presence::connected(client_id, ROLE).to_bytes(), QoS::AtMostOnce, false)
            .await?;
        log.push(LogLevel::Connection, "Client connected");
        Ok(MqttCommander {
            client,
            incoming,
            registry,
            log,
            subscribed: HashSet::new(),
            timeout: Duration::from_secs(5),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    /// Validates `cmd` locally, publishes it and waits for the answer.
    pub async fn send(&mut self, cmd: &DeviceCommand) -> Result<Reply, CommanderError> {
        self.publish_checked(cmd, encode_payload(cmd)).await
    }

    /// Like [`send`](Self::send) but publishes `payload` byte for byte, so
    /// hand-written payloads (e.g. a string temperature) go out unchanged.
    pub async fn send_payload(&mut self, payload: &[u8]) -> Result<Reply, CommanderError> {
        let cmd = decode_payload(payload).map_err(|e| CommanderError::Malformed(e.to_string()))?;
        self.publish_checked(&cmd, payload.to_vec()).await
    }

    async fn publish_checked(&mut self, cmd: &DeviceCommand, payload: Vec<u8>) -> Result<Reply, CommanderError> {
        if let Err(e) = validate_command(&self.registry, cmd) {
            self.log.push(LogLevel::Error, format!("Not sent: {e}"));
            return Err(e.into());
        }
        let topic = self.registry.device_topic(&cmd.device);
        if !self.subscribed.contains(&topic) {
            self.client.subscribe(&topic, QoS::AtMostOnce).await?;
            self.subscribed.insert(topic.clone());
        }
        // Anything still queued belongs to an earlier exchange.
        while self.incoming.try_recv().is_ok() {}

        let wire_bytes = payload.len();
        let text = String::from_utf8_lossy(&payload).into_owned();
        let started = Instant::now();
        self.client.publish(&topic, payload, QoS::AtLeastOnce, false).await?;
        self.log
            .push(LogLevel::Command, format!("Command sent to Emulator: {topic}: {text}"));

        let deadline = tokio::time::Instant::now() + self.timeout;
        loop {
            let msg = match tokio::time::timeout_at(deadline, self.incoming.recv()).await {
                Ok(Some(msg)) => msg,
                Ok(None) => return Err(CommanderError::Unreachable("connection closed".into())),
                Err(_) => {
                    self.log.push(LogLevel::Error, format!("No response on {topic}"));
                    return Err(CommanderError::NoResponse {
                        topic,
                        timeout: self.timeout,
                    });
                }
            };
            if msg.topic != topic {
                continue;
            }
            let Ok(response) = serde_json::from_slice::<DeviceResponse>(&msg.payload) else {
                continue;
            };
            let round_trip = started.elapsed();
            let text = String::from_utf8_lossy(&msg.payload);
            self.log
                .push(LogLevel::Response, format!("Response received from Emulator: {topic}: {text}"));
            return Ok(Reply {
                response,
                topic,
                round_trip,
                wire_bytes,
            });
        }
    }

    pub fn disconnect(&self) {
        self.client.disconnect();
    }
}
