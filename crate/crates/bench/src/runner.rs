use std::time::Duration;

use hearthwire_client::{HttpSender, MqttCommander};
use hearthwire_core::clock::unix_ms;
use hearthwire_core::intent::unsigned_wire;
use hearthwire_core::{
    encode_payload, generate_keypair, sign_intent, DeviceCommand, DeviceId, HashAlg, HomeRegistry, IntentEnvelope,
    Params, RsaKeyPair,
};
use hearthwire_emulator::{run_mqtt, Emulator, MqttHandle, Poller};
use hearthwire_gateway::{Gateway, GatewayConfig, GatewayServer, KeySource};
use hearthwire_kdc::{KdcClient, KdcServer, KdcState, KeyStore};
use hearthwire_mqtt::{Backoff, Broker, BrokerConfig, Endpoint, RunningBroker};
use thiserror::Error;

use crate::report::{BenchReport, Mode, StageTimings};

pub const COMMAND_MIX: &str = "bulb-toggle";
const CLIENT_ID: &str = "bench-client";
const BULB: &str = "smart_bulb1";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("testbed setup failed: {0}")]
    Setup(String),
    #[error("target unreachable: {0}")]
    TargetUnreachable(String),
    #[error("command rejected: {0}")]
    Rejected(String),
    #[error("emulator did not observe the change in iteration {0}")]
    EmulatorMissed(usize),
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub iterations: usize,
    /// Untimed iterations run first and discarded.
    pub warmup: usize,
    pub key_bits: usize,
    pub hash: HashAlg,
    /// Zero fetches the client key from the KDC on every verification.
    pub key_cache_ttl: Duration,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            iterations: 100,
            warmup: 10,
            key_bits: 2048,
            hash: HashAlg::Md5,
            key_cache_ttl: Duration::ZERO,
        }
    }
}

/// KDC, gateway, broker and two emulators (one polling the gateway, one on
/// the broker), all on loopback in this process.
pub struct Testbed {
    pub kdc: KdcServer,
    pub gateway: GatewayServer,
    pub broker: RunningBroker,
    pub http_emulator: Emulator,
    pub mqtt_emulator: Emulator,
    poller: Poller,
    key: RsaKeyPair,
    hash: HashAlg,
    _mqtt: MqttHandle,
}

fn setup<E: std::fmt::Display>(e: E) -> BenchError {
    BenchError::Setup(e.to_string())
}

impl Testbed {
    pub async fn start(options: &BenchOptions) -> Result<Testbed, BenchError> {
        let any = "127.0.0.1:0".parse().expect("literal address");
        let key = generate_keypair(options.key_bits).map_err(setup)?;
        let kdc = KdcServer::start(any, KdcState::new(KeyStore::default())).await.map_err(setup)?;
        KdcClient::new(kdc.url())
            .register(CLIENT_ID, &key.public)
            .await
            .map_err(setup)?;

        let registry = HomeRegistry::default_home();
        let gw = Gateway::new(
            registry.clone(),
            KeySource::kdc(KdcClient::new(kdc.url()), options.key_cache_ttl),
            GatewayConfig {
                hash_alg: options.hash,
                allow_unsigned: true,
                ..GatewayConfig::default()
            },
        );
        let gateway = GatewayServer::start(any, gw).await.map_err(setup)?;
        let broker = Broker::new(BrokerConfig::default())
            .start(None, Some((any, hearthwire_mqtt::ws::DEFAULT_PATH.to_owned())))
            .await
            .map_err(setup)?;

        let http_emulator = Emulator::new(registry.clone());
        let poller = Poller::new(http_emulator.clone(), &gateway.url());
        let mqtt_emulator = Emulator::new(registry);
        let endpoint = ws_endpoint(&broker)?;
        let mut mqtt = run_mqtt(mqtt_emulator.clone(), endpoint, "bench-emulator", Backoff::default());
        if !mqtt.wait_connected(Duration::from_secs(5)).await {
            return Err(BenchError::Setup("emulator could not reach the broker".into()));
        }
        Ok(Testbed {
            kdc,
            gateway,
            broker,
            http_emulator,
            mqtt_emulator,
            poller,
            key,
            hash: options.hash,
            _mqtt: mqtt,
        })
    }

    /// Wire size of the reference command (bulb on, white) in `mode`.
    pub fn payload_bytes(&self, mode: Mode) -> usize {
        let cmd = reference_command();
        let envelope = IntentEnvelope::new(CLIENT_ID, vec![cmd.clone()], unix_ms()).expect("non-empty intent");
        match mode {
            Mode::HttpSigned => sign_intent(&envelope, &self.key.private, self.hash)
                .expect("testbed key signs")
                .to_wire()
                .len(),
            Mode::HttpUnsigned => unsigned_wire(&envelope).len(),
            Mode::Mqtt => encode_payload(&cmd).len(),
        }
    }
}

fn ws_endpoint(broker: &RunningBroker) -> Result<Endpoint, BenchError> {
    broker
        .ws_url()
        .ok_or_else(|| BenchError::Setup("broker has no websocket listener".into()))?
        .parse()
        .map_err(setup)
}

fn reference_command() -> DeviceCommand {
    DeviceCommand::new(DeviceId::new(BULB).expect("valid id"), Params::bulb(true, "#ffffff"))
}

/// The opposite of the bulb's current power, so every command changes state.
fn toggle(current: Option<bool>) -> DeviceCommand {
    let on = !current.unwrap_or(false);
    DeviceCommand::new(DeviceId::new(BULB).expect("valid id"), Params::bulb(on, "#ffffff"))
}

/// Runs `warmup + iterations` sequential round trips and reports the timed ones.
pub async fn run_bench(testbed: &Testbed, mode: Mode, options: &BenchOptions) -> Result<BenchReport, BenchError> {
    if options.iterations == 0 {
        return Err(BenchError::NoIterations);
    }
    let bulb = DeviceId::new(BULB).expect("valid id");
    let mut samples = Vec::with_capacity(options.iterations);
    match mode {
        Mode::HttpSigned | Mode::HttpUnsigned => {
            let sender = match mode {
                Mode::HttpSigned => HttpSender::new(testbed.gateway.url(), CLIENT_ID, testbed.key.private.clone())
                    .with_hash(testbed.hash),
                _ => HttpSender::unsigned(testbed.gateway.url(), CLIENT_ID),
            };
            for i in 0..options.warmup + options.iterations {
                let current = testbed.gateway.gateway.device_state(&bulb).and_then(|d| d.params.power());
                let sent = sender.send(vec![toggle(current)]).await.map_err(|e| match e {
                    hearthwire_client::SendError::Unreachable(m) => BenchError::TargetUnreachable(m),
                    other => BenchError::Rejected(other.to_string()),
                })?;
                let poll = testbed
                    .poller
                    .poll_once()
                    .await
                    .map_err(|e| BenchError::TargetUnreachable(e.to_string()))?;
                if !poll.changed.contains(&bulb) {
                    return Err(BenchError::EmulatorMissed(i));
                }
                if i >= options.warmup {
                    samples.push(StageTimings::new(
                        sent.sign_ms,
                        sent.round_trip_ms - sent.verify_ms,
                        sent.verify_ms,
                        poll.duration_ms,
                    ));
                }
            }
        }
        Mode::Mqtt => {
            let endpoint = ws_endpoint(&testbed.broker)?;
            let mut commander = MqttCommander::connect(&endpoint, CLIENT_ID, testbed.mqtt_emulator.registry().clone())
                .await
                .map_err(|e| BenchError::TargetUnreachable(e.to_string()))?;
            for i in 0..options.warmup + options.iterations {
                let current = testbed.mqtt_emulator.snapshot().device(&bulb).and_then(|d| d.params.power());
                let reply = commander
                    .send(&toggle(current))
                    .await
                    .map_err(|e| BenchError::TargetUnreachable(e.to_string()))?;
                let emulator_ms = testbed
                    .mqtt_emulator
                    .last_handling()
                    .ok_or(BenchError::EmulatorMissed(i))?
                    .as_secs_f64()
                    * 1000.0;
                if i >= options.warmup {
                    let round_trip_ms = reply.round_trip.as_secs_f64() * 1000.0;
                    samples.push(StageTimings::new(0.0, round_trip_ms - emulator_ms, 0.0, emulator_ms));
                }
            }
            commander.disconnect();
        }
    }
    Ok(BenchReport::new(mode, COMMAND_MIX, testbed.payload_bytes(mode), samples))
}
