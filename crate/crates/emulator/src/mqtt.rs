use std::time::Duration;

use hearthwire_core::{DeviceResponse, LogLevel, Presence};
use hearthwire_mqtt::{connect, Backoff, ClientOptions, Endpoint, LastWill, QoS};
use tokio::sync::watch;
use tokio::task::JoinHandle;

use crate::engine::Emulator;

pub const ROLE: &str = "emulator";

/// Running MQTT loop; aborts when dropped.
pub struct MqttHandle {
    connected: watch::Receiver<bool>,
    task: JoinHandle<()>,
}

impl MqttHandle {
    pub fn is_connected(&self) -> bool {
        *self.connected.borrow()
    }

    pub async fn wait_connected(&mut self, timeout: Duration) -> bool {
        tokio::time::timeout(timeout, self.connected.wait_for(|c| *c)).await.is_ok_and(|r| r.is_ok())
    }
}

impl Drop for MqttHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Subscribes to every device topic and the connection topic, applies
/// commands and answers each applied one on its own topic.
pub fn run_mqtt(emulator: Emulator, broker: Endpoint, client_id: &str, backoff: Backoff) -> MqttHandle {
    let (tx, rx) = watch::channel(false);
    let task = tokio::spawn(mqtt_loop(emulator, broker, client_id.to_owned(), backoff, tx));
    MqttHandle { connected: rx, task }
}

async fn mqtt_loop(
    emulator: Emulator,
    broker: Endpoint,
    client_id: String,
    mut backoff: Backoff,
    connected: watch::Sender<bool>,
) {
    let log = emulator.log().clone();
    let registry = emulator.registry().clone();
    let connection_topic = registry.connection_topic();
    loop {
        let opts = ClientOptions::new(&client_id).will(LastWill {
            topic: connection_topic.clone(),
            payload: Presence::disconnected(&client_id, ROLE).to_bytes(),
            qos: QoS::AtMostOnce,
            retain: false,
        });
        let session = async {
            let (client, incoming) = connect(&broker, opts).await?;
            client.subscribe(&registry.device_filter(), QoS::AtMostOnce).await?;
            client
                .publish(
                    &connection_topic,
                    Presence::connected(&client_id, ROLE).to_bytes(),
                    QoS::AtMostOnce,
                    false,
                )
                .await?;
            Ok::<_, hearthwire_mqtt::ClientError>((client, incoming))
        };
        let (client, mut incoming) = match session.await {
            Ok(pair) => pair,
            Err(e) => {
                log.push(LogLevel::Error, format!("Cannot reach broker {broker}: {e}"));
                log.push(LogLevel::Connection, "reconnecting");
                tokio::time::sleep(backoff.next_delay()).await;
                continue;
            }
        };
        backoff.reset();
        log.push(LogLevel::Connection, "Emulator connected");
        let _ = connected.send(true);
        while let Some(msg) = incoming.recv().await {
            if msg.topic == connection_topic {
                if let Some(p) = Presence::from_bytes(&msg.payload).filter(|p| p.client_id != client_id) {
                    log.push(LogLevel::Connection, p.describe());
                }
                continue;
            }
            if serde_json::from_slice::<DeviceResponse>(&msg.payload).is_ok() {
                continue;
            }
            let Some(response) = emulator.handle_payload(&msg.topic, &msg.payload) else {
                continue;
            };
            let body = serde_json::to_vec(&response).expect("response serialization is infallible");
            match client.publish(&msg.topic, body.clone(), QoS::AtMostOnce, false).await {
                Ok(()) => {
                    let text = String::from_utf8_lossy(&body);
                    log.push(LogLevel::Response, format!("Response sent: {}: {text}", msg.topic));
                }
                Err(e) => {
                    log.push(LogLevel::Error, format!("Cannot publish response on {}: {e}", msg.topic));
                }
            }
        }
        let _ = connected.send(false);
        log.push(LogLevel::Connection, "Broker connection lost, reconnecting");
        tokio::time::sleep(backoff.next_delay()).await;
    }
}
