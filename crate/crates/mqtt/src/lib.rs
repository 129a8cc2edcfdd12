//! Embedded MQTT 3.1.1 broker with topic policies, plus a matching client.

pub mod broker;
pub mod client;
pub mod codec;
pub mod config;
pub mod policy;
pub mod topic;
pub mod ws;

pub use broker::{delivery_qos, Broker, BrokerStats, ConnectionError, RunningBroker, SessionInfo, Transport};
pub use client::{connect, Backoff, ClientError, ClientOptions, Endpoint, EndpointError, Incoming, MqttClient};
pub use codec::{LastWill, Packet, ProtocolError, Publish, QoS};
pub use config::{BrokerConfig, ConfigError};
pub use policy::{Action, Decision, Effect, PolicyDocument, Statement};
pub use topic::{topic_matches, validate_topic_name, TopicError, TopicFilter};
