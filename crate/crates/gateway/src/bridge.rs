//! Carries device commands between MQTT device topics and the gateway state.

use std::time::Duration;

use hearthwire_core::{decode_payload, DeviceResponse, LogLevel, Presence, PresenceStatus};
use hearthwire_mqtt::{connect, Backoff, ClientOptions, Endpoint, LastWill, MqttClient, Publish, QoS};
use tokio::sync::watch;
use tokio::task::JoinHandle;

use crate::gateway::Gateway;

pub const ROLE: &str = "gateway";

#[derive(Debug, Clone)]
pub struct BridgeOptions {
    pub endpoint: Endpoint,
    pub client_id: String,
    /// Publish `{"response": ...}` after applying a command. Turn this off
    /// when an emulator on the same topics already answers.
    pub respond: bool,
    pub keep_alive: u16,
    pub backoff: Backoff,
}

impl BridgeOptions {
    pub fn new(endpoint: Endpoint) -> Self {
        BridgeOptions {
            endpoint,
            client_id: "device-gateway".into(),
            respond: true,
            keep_alive: 30,
            backoff: Backoff::default(),
        }
    }
}

/// Running bridge task; aborts when dropped.
pub struct BridgeHandle {
    connected: watch::Receiver<bool>,
    task: JoinHandle<()>,
}

impl BridgeHandle {
    pub fn is_connected(&self) -> bool {
        *self.connected.borrow()
    }

    /// Waits until the bridge is subscribed, or the timeout passes.
    pub async fn wait_connected(&mut self, timeout: Duration) -> bool {
        tokio::time::timeout(timeout, self.connected.wait_for(|c| *c)).await.is_ok_and(|r| r.is_ok())
    }
}

impl Drop for BridgeHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

pub fn spawn_mqtt_bridge(gateway: Gateway, options: BridgeOptions) -> BridgeHandle {
    let (tx, rx) = watch::channel(false);
    let task = tokio::spawn(run(gateway, options, tx));
    BridgeHandle { connected: rx, task }
}

async fn run(gateway: Gateway, mut options: BridgeOptions, connected: watch::Sender<bool>) {
    let registry = gateway.registry().clone();
    let connection_topic = registry.connection_topic();
    loop {
        let will = LastWill {
            topic: connection_topic.clone(),
            payload: Presence::disconnected(&options.client_id, ROLE).to_bytes(),
            qos: QoS::AtMostOnce,
            retain: false,
        };
        let opts = ClientOptions::new(&options.client_id)
            .keep_alive(options.keep_alive)
            .will(will);
        let session = async {
            let (client, incoming) = connect(&options.endpoint, opts).await?;
            client.subscribe(&registry.device_filter(), QoS::AtMostOnce).await?;
            client
                .publish(
                    &connection_topic,
                    Presence::connected(&options.client_id, ROLE).to_bytes(),
                    QoS::AtMostOnce,
                    false,
                )
                .await?;
            Ok::<_, hearthwire_mqtt::ClientError>((client, incoming))
        };
        let (client, mut incoming) = match session.await {
            Ok(pair) => pair,
            Err(e) => {
                gateway
                    .log()
                    .push(LogLevel::Error, format!("MQTT bridge cannot reach {}: {e}", options.endpoint));
                gateway.log().push(LogLevel::Connection, "reconnecting");
                tokio::time::sleep(options.backoff.next_delay()).await;
                continue;
            }
        };
        options.backoff.reset();
        gateway
            .log()
            .push(LogLevel::Connection, format!("Gateway connected to broker {}", options.endpoint));
        let _ = connected.send(true);
        while let Some(msg) = incoming.recv().await {
            handle(&gateway, &client, &options, &connection_topic, msg).await;
        }
        let _ = connected.send(false);
        gateway.log().push(LogLevel::Connection, "Broker connection lost, reconnecting");
        tokio::time::sleep(options.backoff.next_delay()).await;
    }
}

async fn handle(gateway: &Gateway, client: &MqttClient, options: &BridgeOptions, connection_topic: &str, msg: Publish) {
    if msg.topic == connection_topic {
        if let Some(p) = Presence::from_bytes(&msg.payload) {
            if p.client_id == options.client_id {
                return;
            }
            if p.role == "emulator" {
                match p.status {
                    PresenceStatus::Connected => gateway.mark_emulator_seen(),
                    PresenceStatus::Disconnected => gateway.mark_emulator_gone(),
                }
            }
            gateway.log().push(LogLevel::Connection, p.describe());
        }
        return;
    }
    let Some(topic_device) = gateway.registry().device_for_topic(&msg.topic) else {
        return;
    };
    if serde_json::from_slice::<DeviceResponse>(&msg.payload).is_ok() {
        // Acknowledgements, ours or the emulator's.
        if !options.respond {
            gateway.mark_emulator_seen();
        }
        return;
    }
    let cmd = match decode_payload(&msg.payload) {
        Ok(cmd) => cmd,
        Err(e) => {
            gateway
                .log()
                .push(LogLevel::Error, format!("Malformed payload on {}: {e}", msg.topic));
            return;
        }
    };
    if cmd.device != topic_device {
        gateway.log().push(
            LogLevel::Error,
            format!("Payload for {} published on the topic of {topic_device}", cmd.device),
        );
        return;
    }
    let Ok(mut responses) = gateway.apply_commands(&format!("mqtt:{}", msg.topic), std::slice::from_ref(&cmd)) else {
        return;
    };
    if options.respond {
        let body = serde_json::to_vec(&responses.remove(0)).expect("response serialization is infallible");
        if let Err(e) = client.publish(&msg.topic, body, QoS::AtMostOnce, false).await {
            gateway.log().push(LogLevel::Error, format!("Cannot publish response: {e}"));
        }
    }
}
