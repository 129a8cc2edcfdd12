use std::io::BufRead;
use std::time::{Duration, Instant};

use hearthwire_core::{DeviceCommand, DeviceId, HomeRegistry, LogEntry, LogLevel, Params};
use hearthwire_emulator::{run_http_poll, Emulator, EmulatorConfig, EmulatorServer, PollError, Poller};
use hearthwire_gateway::{Gateway, GatewayConfig, GatewayServer, KeySource};

fn id(s: &str) -> DeviceId {
    DeviceId::new(s).unwrap()
}

async fn gateway() -> GatewayServer {
    let gw = Gateway::new(HomeRegistry::default_home(), KeySource::fixed([]), GatewayConfig::default());
    GatewayServer::start("127.0.0.1:0".parse().unwrap(), gw).await.unwrap()
}

fn count(emu: &Emulator, level: LogLevel) -> usize {
    emu.log().entries().iter().filter(|e| e.level == level).count()
}

#[test]
fn poll_interval_floor() {
    let mut cfg = EmulatorConfig::http_poll("http://localhost:5000");
    assert_eq!(cfg.poll_interval, Duration::from_millis(500));
    cfg.validate().unwrap();
    cfg.poll_interval = Duration::from_millis(49);
    assert!(cfg.validate().is_err());
    cfg.poll_interval = Duration::from_millis(50);
    cfg.validate().unwrap();
}

#[test]
fn initial_snapshot_is_registry_state_and_stable() {
    let reg = HomeRegistry::default_home();
    let emu = Emulator::new(reg.clone());
    assert_eq!(emu.snapshot(), reg.initial_state());
    assert_eq!(emu.snapshot(), emu.snapshot());
}

#[tokio::test]
async fn gateway_change_shows_up_within_two_intervals() {
    let gw = gateway().await;
    let emu = Emulator::new(HomeRegistry::default_home());
    let interval = Duration::from_millis(100);
    let poller = Poller::new(emu.clone(), &gw.url());
    let task = tokio::spawn(run_http_poll(poller, interval));
    tokio::time::sleep(Duration::from_millis(150)).await;

    let before = count(&emu, LogLevel::Action);
    gw.gateway
        .apply_commands("test", &[DeviceCommand::new(id("smart_bulb1"), Params::bulb(true, "#ffffff"))])
        .unwrap();
    let flipped = Instant::now();
    loop {
        if emu.snapshot().device(&id("smart_bulb1")).unwrap().params.power() == Some(true) {
            break;
        }
        assert!(flipped.elapsed() < 2 * interval, "emulator did not converge in two intervals");
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    assert_eq!(count(&emu, LogLevel::Action), before + 1);
    let last = emu.log().entries().into_iter().rfind(|e| e.level == LogLevel::Action).unwrap();
    assert_eq!(last.message, "Smart_bulb1 Turned On in living room");
    assert_eq!(emu.snapshot(), gw.gateway.state());
    task.abort();
}

#[tokio::test]
async fn quiescent_gateway_produces_no_events() {
    let gw = gateway().await;
    let emu = Emulator::new(HomeRegistry::default_home());
    let poller = Poller::new(emu.clone(), &gw.url());
    for _ in 0..5 {
        assert!(poller.poll_once().await.unwrap().changed.is_empty());
    }
    assert!(emu.log().is_empty());

    gw.gateway
        .apply_commands(
            "test",
            &[
                DeviceCommand::new(id("smart_fan1"), Params::fan(true)),
                DeviceCommand::new(id("smart_bulb1"), Params::bulb(true, "#00FF00")),
            ],
        )
        .unwrap();
    let report = poller.poll_once().await.unwrap();
    assert_eq!(report.changed, vec![id("smart_bulb1"), id("smart_fan1")]);
    for _ in 0..3 {
        assert!(poller.poll_once().await.unwrap().changed.is_empty());
    }
    assert_eq!(emu.log().len(), 2);
}

#[tokio::test]
async fn outage_is_logged_then_recovery() {
    let gw = gateway().await;
    let addr = gw.addr;
    let gateway_handle = gw.gateway.clone();
    let emu = Emulator::new(HomeRegistry::default_home());
    let task = tokio::spawn(run_http_poll(Poller::new(emu.clone(), &gw.url()), Duration::from_millis(50)));
    tokio::time::sleep(Duration::from_millis(120)).await;
    drop(gw);
    tokio::time::sleep(Duration::from_millis(200)).await;
    let errors = count(&emu, LogLevel::Error);
    assert_eq!(errors, 1, "{:?}", emu.log().entries());

    let _gw = GatewayServer::start(addr, gateway_handle).await.unwrap();
    let deadline = Instant::now() + Duration::from_secs(5);
    while count(&emu, LogLevel::Connection) < 3 {
        assert!(Instant::now() < deadline, "{:?}", emu.log().entries());
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    let levels: Vec<_> = emu.log().entries().iter().map(|e| e.level).collect();
    assert_eq!(
        levels,
        vec![LogLevel::Connection, LogLevel::Error, LogLevel::Connection, LogLevel::Connection]
    );
    assert_eq!(count(&emu, LogLevel::Error), 1);
    task.abort();
}

#[tokio::test]
async fn malformed_state_is_reported_not_applied() {
    let app = axum::Router::new().route("/api/state", axum::routing::get(|| async { "{\"devices\": 7}" }));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await });
    let emu = Emulator::new(HomeRegistry::default_home());
    let before = emu.snapshot();
    let err = Poller::new(emu.clone(), &url).poll_once().await.unwrap_err();
    assert!(matches!(err, PollError::Malformed(_)));
    assert_eq!(emu.snapshot(), before);
}

#[tokio::test]
async fn invalid_remote_params_are_skipped() {
    let emu = Emulator::new(HomeRegistry::default_home());
    let mut remote = emu.snapshot();
    remote.device_mut(&id("smart_ac1")).unwrap().params =
        Params::ac(true, hearthwire_core::HDirection::Left, 40);
    remote.device_mut(&id("smart_fan1")).unwrap().params = Params::fan(true);
    assert_eq!(emu.sync_from(&remote), vec![id("smart_fan1")]);
    assert_eq!(emu.snapshot().device(&id("smart_ac1")).unwrap().params.power(), Some(false));
    assert_eq!(count(&emu, LogLevel::Error), 1);
}

#[tokio::test]
async fn local_endpoints() {
    let gw = gateway().await;
    let emu = Emulator::new(HomeRegistry::default_home());
    let poller = Poller::new(emu.clone(), &gw.url());
    let server = EmulatorServer::start("127.0.0.1:0".parse().unwrap(), emu.clone(), Some(poller))
        .await
        .unwrap();
    let http = reqwest::Client::new();

    gw.gateway
        .apply_commands("test", &[DeviceCommand::new(id("smart_fan1"), Params::fan(true))])
        .unwrap();
    let report: serde_json::Value = http
        .post(format!("{}/emulator/poll", server.url()))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(report["changed"], serde_json::json!(["smart_fan1"]));

    let resp = http
        .get(format!("{}/emulator/state", server.url()))
        .header("origin", "http://localhost:8080")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
    let state: hearthwire_core::HomeState = resp.json().await.unwrap();
    assert_eq!(state, emu.snapshot());

    let logs: serde_json::Value = http
        .get(format!("{}/emulator/logs?cursor=0", server.url()))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(logs["cursor"], 1);
    assert_eq!(logs["entries"][0]["message"], "Smart_fan1 Turned On in living room");
}

#[test]
fn ndjson_sink_mirrors_log() {
    let file = tempfile::NamedTempFile::new().unwrap();
    let emu = Emulator::new(HomeRegistry::default_home());
    emu.log().set_sink(Box::new(file.reopen().unwrap()));
    let mut remote = emu.snapshot();
    remote.device_mut(&id("smart_lock1")).unwrap().params = Params::lock(hearthwire_core::DoorStatus::Unlocked);
    emu.sync_from(&remote);
    let lines: Vec<LogEntry> = std::io::BufReader::new(file.reopen().unwrap())
        .lines()
        .map(|l| serde_json::from_str(&l.unwrap()).unwrap())
        .collect();
    assert_eq!(lines, emu.log().entries());
    assert_eq!(lines[0].message, "Smart_lock1 Unlocked");
}
