use std::time::Duration;

use hearthwire_core::{DeviceId, HomeRegistry, Params, Presence};
use hearthwire_gateway::{spawn_mqtt_bridge, BridgeOptions, Gateway, GatewayConfig, KeySource};
use hearthwire_mqtt::{connect, Broker, BrokerConfig, ClientOptions, Endpoint, QoS};
use tokio::time::timeout;

async fn setup(respond: bool) -> (hearthwire_mqtt::RunningBroker, Gateway, hearthwire_gateway::BridgeHandle) {
    let broker = Broker::new(BrokerConfig::default())
        .start(Some("127.0.0.1:0".parse().unwrap()), None)
        .await
        .unwrap();
    let gw = Gateway::new(HomeRegistry::default_home(), KeySource::fixed([]), GatewayConfig::default());
    let mut opts = BridgeOptions::new(broker.tcp_url().unwrap().parse().unwrap());
    opts.respond = respond;
    let mut bridge = spawn_mqtt_bridge(gw.clone(), opts);
    assert!(bridge.wait_connected(Duration::from_secs(5)).await);
    (broker, gw, bridge)
}

#[tokio::test]
async fn mqtt_command_is_applied_and_answered() {
    let (broker, gw, _bridge) = setup(true).await;
    let endpoint: Endpoint = broker.tcp_url().unwrap().parse().unwrap();
    let (client, mut rx) = connect(&endpoint, ClientOptions::new("client1")).await.unwrap();
    let topic = gw.registry().device_topic(&DeviceId::new("smart_bulb1").unwrap());
    client.subscribe(&topic, QoS::AtMostOnce).await.unwrap();

    let payload = br##"{"device":"smart_bulb1","params":{"power":true,"color":"#ff8800"}}"##;
    client.publish(&topic, payload.to_vec(), QoS::AtLeastOnce, false).await.unwrap();
    let mut answer = None;
    while let Ok(Some(msg)) = timeout(Duration::from_secs(5), rx.recv()).await {
        if msg.payload.starts_with(b"{\"response\"") {
            answer = Some(msg);
            break;
        }
    }
    let answer = answer.expect("no response published");
    assert_eq!(answer.topic, topic);
    assert_eq!(
        answer.payload,
        br#"{"response":"Smart_bulb1 Turned On in living room"}"#.to_vec()
    );
    let bulb = gw.device_state(&DeviceId::new("smart_bulb1").unwrap()).unwrap();
    assert_eq!(bulb.params, Params::bulb(true, "#ff8800"));
}

#[tokio::test]
async fn malformed_payload_gets_no_response() {
    let (broker, gw, _bridge) = setup(true).await;
    let endpoint: Endpoint = broker.tcp_url().unwrap().parse().unwrap();
    let (client, mut rx) = connect(&endpoint, ClientOptions::new("client1")).await.unwrap();
    let topic = gw.registry().device_topic(&DeviceId::new("smart_fan1").unwrap());
    client.subscribe(&topic, QoS::AtMostOnce).await.unwrap();
    let before = gw.state().state_hash();

    for bad in [
        &b"not json"[..],
        br#"{"device":"smart_fan1","params":{"power":"on"}}"#,
        br##"{"device":"smart_bulb1","params":{"power":true,"color":"#ffffff"}}"##,
    ] {
        client.publish(&topic, bad.to_vec(), QoS::AtLeastOnce, false).await.unwrap();
    }
    // Drain our own echoes, then make sure nothing else shows up.
    let mut seen = 0;
    while let Ok(Some(msg)) = timeout(Duration::from_millis(400), rx.recv()).await {
        assert!(!msg.payload.starts_with(b"{\"response\""), "unexpected response");
        seen += 1;
    }
    assert_eq!(seen, 3);
    assert_eq!(gw.state().state_hash(), before);
    let errors = gw
        .log()
        .entries()
        .into_iter()
        .filter(|e| e.level == hearthwire_core::LogLevel::Error)
        .count();
    assert_eq!(errors, 3);
}

#[tokio::test]
async fn emulator_presence_updates_online_flag() {
    let (broker, gw, _bridge) = setup(false).await;
    let endpoint: Endpoint = broker.tcp_url().unwrap().parse().unwrap();
    let conn = gw.registry().connection_topic();
    let (emu, _rx) = connect(&endpoint, ClientOptions::new("emu-1")).await.unwrap();

    emu.publish(&conn, Presence::disconnected("emu-1", "emulator").to_bytes(), QoS::AtLeastOnce, false)
        .await
        .unwrap();
    let gone = async {
        while gw.emulator_online() {
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
    };
    timeout(Duration::from_secs(5), gone).await.unwrap();

    emu.publish(&conn, Presence::connected("emu-1", "emulator").to_bytes(), QoS::AtLeastOnce, false)
        .await
        .unwrap();
    let back = async {
        while !gw.emulator_online() {
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
    };
    timeout(Duration::from_secs(5), back).await.unwrap();
    assert!(gw
        .log()
        .entries()
        .iter()
        .any(|e| e.message == "emulator emu-1 connected"));
}

#[tokio::test]
async fn bridge_reconnects_after_broker_restart() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let gw = Gateway::new(HomeRegistry::default_home(), KeySource::fixed([]), GatewayConfig::default());
    let mut opts = BridgeOptions::new(Endpoint::Tcp(addr.to_string()));
    opts.backoff = hearthwire_mqtt::Backoff::new(Duration::from_millis(20), Duration::from_millis(100));
    let mut bridge = spawn_mqtt_bridge(gw.clone(), opts);
    tokio::time::sleep(Duration::from_millis(150)).await;
    assert!(!bridge.is_connected());

    let broker = Broker::new(BrokerConfig::default()).start(Some(addr), None).await.unwrap();
    assert!(bridge.wait_connected(Duration::from_secs(5)).await);
    assert!(broker.broker.is_connected("device-gateway"));
    assert!(gw.log().entries().iter().any(|e| e.message == "reconnecting"));
}
