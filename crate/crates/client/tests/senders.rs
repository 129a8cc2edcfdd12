use std::sync::OnceLock;
use std::time::Duration;

use hearthwire_client::{exit, HttpSender, MqttCommander, SendError};
use hearthwire_core::{
    generate_keypair, DeviceCommand, DeviceId, HDirection, HomeRegistry, LogLevel, Params, RsaKeyPair,
};
use hearthwire_emulator::{run_mqtt, Emulator, Poller};
use hearthwire_gateway::{Gateway, GatewayConfig, GatewayServer, KeySource};
use hearthwire_kdc::{KdcClient, KdcServer, KdcState, KeyStore};
use hearthwire_mqtt::{Backoff, Broker, BrokerConfig, Endpoint, PolicyDocument, RunningBroker};

fn key() -> &'static RsaKeyPair {
    static KEY: OnceLock<RsaKeyPair> = OnceLock::new();
    KEY.get_or_init(|| generate_keypair(1024).unwrap())
}

fn id(s: &str) -> DeviceId {
    DeviceId::new(s).unwrap()
}

struct HttpRig {
    _kdc: KdcServer,
    gw: GatewayServer,
}

async fn http_rig() -> HttpRig {
    let kdc = KdcServer::start("127.0.0.1:0".parse().unwrap(), KdcState::new(KeyStore::default()))
        .await
        .unwrap();
    let client = KdcClient::new(kdc.url());
    client.register("client1", &key().public).await.unwrap();
    let gw = Gateway::new(
        HomeRegistry::default_home(),
        KeySource::kdc(client, Duration::ZERO),
        GatewayConfig {
            allow_unsigned: true,
            ..GatewayConfig::default()
        },
    );
    let gw = GatewayServer::start("127.0.0.1:0".parse().unwrap(), gw).await.unwrap();
    HttpRig { _kdc: kdc, gw }
}

#[tokio::test]
async fn http_send_reaches_emulator() {
    let rig = http_rig().await;
    let emu = Emulator::new(HomeRegistry::default_home());
    let poller = Poller::new(emu.clone(), &rig.gw.url());
    let sender = HttpSender::new(rig.gw.url(), "client1", key().private.clone());
    let sent = sender
        .send(vec![DeviceCommand::new(id("smart_bulb1"), Params::bulb(true, "#ffffff"))])
        .await
        .unwrap();
    assert_eq!(sent.results.len(), 1);
    assert_eq!(sent.results[0].response, "Smart_bulb1 Turned On in living room");
    assert!(sent.sign_ms > 0.0 && sent.verify_ms > 0.0 && sent.round_trip_ms >= sent.verify_ms);

    let report = poller.poll_once().await.unwrap();
    assert_eq!(report.changed, vec![id("smart_bulb1")]);
    assert_eq!(emu.snapshot(), rig.gw.gateway.state());
}

#[tokio::test]
async fn composite_send_gives_two_lines() {
    let rig = http_rig().await;
    let sender = HttpSender::new(rig.gw.url(), "client1", key().private.clone());
    let sent = sender
        .send(vec![
            DeviceCommand::new(id("smart_bulb1"), Params::bulb(true, "#ffffff")),
            DeviceCommand::new(id("smart_fan1"), Params::fan(true)),
        ])
        .await
        .unwrap();
    let lines: Vec<_> = sent.results.iter().map(|r| r.response.as_str()).collect();
    assert_eq!(
        lines,
        ["Smart_bulb1 Turned On in living room", "Smart_fan1 Turned On in living room"]
    );
}

#[tokio::test]
async fn http_errors_map_to_exit_codes() {
    let rig = http_rig().await;
    let sender = HttpSender::new(rig.gw.url(), "client1", key().private.clone());
    let err = sender
        .send(vec![DeviceCommand::new(id("smart_ac1"), Params::ac(true, HDirection::Center, 30))])
        .await
        .unwrap_err();
    assert_eq!(err.exit_code(), exit::VALIDATION);
    assert_eq!(err.to_string(), "temperature 30 out of range [18, 26]");

    let stranger = HttpSender::new(rig.gw.url(), "mallory", key().private.clone());
    let err = stranger
        .send(vec![DeviceCommand::new(id("smart_fan1"), Params::fan(true))])
        .await
        .unwrap_err();
    assert!(matches!(&err, SendError::Auth { kind, .. } if kind == "unknown_client"));
    assert_eq!(err.exit_code(), exit::AUTH);

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let dead = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let err = HttpSender::new(dead, "client1", key().private.clone())
        .send(vec![DeviceCommand::new(id("smart_fan1"), Params::fan(true))])
        .await
        .unwrap_err();
    assert_eq!(err.exit_code(), exit::CONNECTIVITY);
}

#[tokio::test]
async fn unsigned_sender_uses_its_own_route() {
    let rig = http_rig().await;
    let sender = HttpSender::unsigned(rig.gw.url(), "anyone");
    let sent = sender
        .send(vec![DeviceCommand::new(id("smart_fan1"), Params::fan(true))])
        .await
        .unwrap();
    assert_eq!(sent.verify_ms, 0.0);
    assert_eq!(sent.sign_ms, 0.0);
}

async fn broker(config: BrokerConfig) -> (RunningBroker, Endpoint) {
    let broker = Broker::new(config).start(Some("127.0.0.1:0".parse().unwrap()), None).await.unwrap();
    let endpoint = broker.tcp_url().unwrap().parse().unwrap();
    (broker, endpoint)
}

#[tokio::test]
async fn mqtt_log_pairs_match_the_ui_format() {
    let (_broker, endpoint) = broker(BrokerConfig::default()).await;
    let emu = Emulator::new(HomeRegistry::default_home());
    let mut handle = run_mqtt(emu.clone(), endpoint.clone(), "emulator", Backoff::default());
    assert!(handle.wait_connected(Duration::from_secs(5)).await);
    let mut cmd = MqttCommander::connect(&endpoint, "client1", HomeRegistry::default_home())
        .await
        .unwrap();

    cmd.send_payload(br#"{"device":"smart_ac1","params":{"power":false,"h_direction":"rotate(0deg)","temperature":"20"}}"#)
        .await
        .unwrap();
    let reply = cmd
        .send(&DeviceCommand::new(id("smart_bulb1"), Params::bulb(true, "#ffffff")))
        .await
        .unwrap();
    assert_eq!(reply.response.response, "Smart_bulb1 Turned On in living room");

    let lines: Vec<_> = cmd
        .log()
        .entries()
        .into_iter()
        .filter(|e| matches!(e.level, LogLevel::Command | LogLevel::Response))
        .map(|e| e.message)
        .collect();
    let t = "ELL893/muneeb_majid/smarthome/mqtt";
    assert_eq!(
        lines,
        [
            format!(r#"Command sent to Emulator: {t}/smart_ac1: {{"device":"smart_ac1","params":{{"power":false,"h_direction":"rotate(0deg)","temperature":"20"}}}}"#),
            format!(r#"Response received from Emulator: {t}/smart_ac1: {{"response":"Smart_ac1 Turned Off in bedroom"}}"#),
            format!(r##"Command sent to Emulator: {t}/smart_bulb1: {{"device":"smart_bulb1","params":{{"power":true,"color":"#ffffff"}}}}"##),
            format!(r#"Response received from Emulator: {t}/smart_bulb1: {{"response":"Smart_bulb1 Turned On in living room"}}"#),
        ]
    );
}

#[tokio::test]
async fn mqtt_errors_map_to_exit_codes() {
    let (_broker, endpoint) = broker(BrokerConfig::default()).await;
    let mut cmd = MqttCommander::connect(&endpoint, "client1", HomeRegistry::default_home())
        .await
        .unwrap()
        .with_timeout(Duration::from_millis(200));
    let err = cmd
        .send(&DeviceCommand::new(id("smart_ac1"), Params::ac(true, HDirection::Center, 30)))
        .await
        .unwrap_err();
    assert_eq!(err.exit_code(), exit::VALIDATION);
    // Nobody is answering.
    let err = cmd
        .send(&DeviceCommand::new(id("smart_fan1"), Params::fan(true)))
        .await
        .unwrap_err();
    assert_eq!(err.exit_code(), exit::CONNECTIVITY);

    let locked_down = BrokerConfig::with_default_policy(PolicyDocument::restricted("elsewhere"));
    let (_broker, endpoint) = broker(locked_down).await;
    let mut cmd = MqttCommander::connect(&endpoint, "client1", HomeRegistry::default_home())
        .await
        .unwrap();
    let err = cmd
        .send(&DeviceCommand::new(id("smart_fan1"), Params::fan(true)))
        .await
        .unwrap_err();
    assert_eq!(err.exit_code(), exit::AUTH);

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let dead: Endpoint = listener.local_addr().unwrap().to_string().parse().unwrap();
    drop(listener);
    let err = MqttCommander::connect(&dead, "client1", HomeRegistry::default_home())
        .await
        .err()
        .unwrap();
    assert_eq!(err.exit_code(), exit::CONNECTIVITY);
}
