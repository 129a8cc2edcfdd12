use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Subcommand};
use hearthwire_core::SystemClock;
use hearthwire_gateway::{spawn_mqtt_bridge, BridgeOptions, Gateway, GatewayConfig, GatewayServer, KeySource};
use hearthwire_kdc::{KdcClient, KdcState, KeyStore};
use hearthwire_mqtt::{Broker, BrokerConfig, Endpoint};
use serde::Serialize;
use tokio::net::TcpListener;

use crate::settings::{
    load_registry, parse_hash, BrokerFile, BrokerSettings, FileConfig, GatewayFile, GatewaySettings, KdcFile,
    KdcSettings,
};
use crate::{announce, shutdown_signal, CliError};

#[derive(Debug, Subcommand)]
pub enum ServeCommand {
    /// Key distribution center.
    Kdc(KdcArgs),
    /// Device gateway with the signed-intent HTTP API.
    Gateway(GatewayArgs),
    /// MQTT broker on TCP and WebSocket.
    Broker(BrokerArgs),
}

#[derive(Debug, Args)]
pub struct KdcArgs {
    #[command(flatten)]
    pub settings: KdcFile,
    /// Print the resolved settings as JSON and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct GatewayArgs {
    #[command(flatten)]
    pub settings: GatewayFile,
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct BrokerArgs {
    #[command(flatten)]
    pub settings: BrokerFile,
    #[arg(long)]
    pub print_config: bool,
}

fn print_settings(settings: &impl Serialize) {
    announce(serde_json::to_string_pretty(settings).expect("settings serialize"));
}

pub async fn run(cmd: ServeCommand, file: &FileConfig) -> Result<(), CliError> {
    match cmd {
        ServeCommand::Kdc(args) => {
            let settings = KdcSettings::resolve(args.settings, &file.kdc);
            if args.print_config {
                print_settings(&settings);
                return Ok(());
            }
            serve_kdc(settings).await
        }
        ServeCommand::Gateway(args) => {
            let settings = GatewaySettings::resolve(args.settings, &file.gateway);
            if args.print_config {
                print_settings(&settings);
                return Ok(());
            }
            serve_gateway(settings).await
        }
        ServeCommand::Broker(args) => {
            let settings = BrokerSettings::resolve(args.settings, &file.broker);
            if args.print_config {
                print_settings(&settings);
                return Ok(());
            }
            serve_broker(settings).await
        }
    }
}

async fn bind(addr: SocketAddr) -> Result<TcpListener, CliError> {
    TcpListener::bind(addr).await.map_err(|e| CliError::bind(addr, e))
}

async fn serve_kdc(settings: KdcSettings) -> Result<(), CliError> {
    let store = match &settings.snapshot {
        Some(path) => KeyStore::with_snapshot(path, Arc::new(SystemClock))
            .map_err(|e| CliError::BadConfig(format!("{}: {e}", path.display())))?,
        None => KeyStore::default(),
    };
    let mut state = KdcState::new(store);
    if let Some(token) = settings.token {
        state = state.with_token(token);
    }
    let listener = bind(SocketAddr::new(settings.bind, settings.port)).await?;
    let addr = listener.local_addr().map_err(|e| CliError::Failure(e.to_string()))?;
    announce(format!("kdc listening on http://{addr}"));
    tokio::select! {
        served = hearthwire_kdc::serve(listener, state) => served.map_err(|e| CliError::Failure(e.to_string())),
        _ = shutdown_signal() => Ok(()),
    }
}

async fn serve_gateway(settings: GatewaySettings) -> Result<(), CliError> {
    let registry = load_registry(settings.registry.as_deref())?;
    let hash_alg = parse_hash(&settings.hash)?;
    let bridge_endpoint = settings
        .broker
        .as_deref()
        .map(|raw| raw.parse::<Endpoint>().map_err(|e| CliError::BadConfig(e.to_string())))
        .transpose()?;
    let config = GatewayConfig {
        freshness_window: (settings.freshness_ms > 0).then(|| Duration::from_millis(settings.freshness_ms)),
        hash_alg,
        allow_unsigned: settings.allow_unsigned,
        poll_interval: Duration::from_millis(settings.poll_interval_ms.max(1)),
    };
    let keys = KeySource::kdc(
        KdcClient::new(settings.kdc.trim_end_matches('/')),
        Duration::from_millis(settings.key_cache_ttl_ms),
    );
    let gateway = Gateway::new(registry, keys, config);
    let listener = bind(SocketAddr::new(settings.bind, settings.port)).await?;
    let server = GatewayServer::from_listener(listener, gateway.clone()).map_err(|e| CliError::Failure(e.to_string()))?;
    gateway.log().set_sink(Box::new(std::io::stderr()));
    announce(format!("gateway listening on {}", server.url()));

    let _bridge = bridge_endpoint.map(|endpoint| {
        let mut opts = BridgeOptions::new(endpoint);
        opts.respond = settings.bridge_respond;
        spawn_mqtt_bridge(gateway.clone(), opts)
    });
    shutdown_signal().await;
    Ok(())
}

async fn serve_broker(settings: BrokerSettings) -> Result<(), CliError> {
    let config = match &settings.policy {
        Some(path) => BrokerConfig::load(path).map_err(|e| CliError::BadConfig(format!("{}: {e}", path.display())))?,
        None => BrokerConfig::default(),
    };
    config.check().map_err(|e| CliError::BadConfig(e.to_string()))?;
    if !settings.ws_path.starts_with('/') {
        return Err(CliError::BadConfig(format!("ws_path {:?} must start with '/'", settings.ws_path)));
    }
    let tcp = SocketAddr::new(settings.bind, settings.port);
    let ws = SocketAddr::new(settings.bind, settings.ws_port);
    let tcp_listener = bind(tcp).await?;
    let ws_listener = bind(ws).await?;
    let broker = Broker::new(config);
    let tcp_addr = tcp_listener.local_addr().map_err(|e| CliError::Failure(e.to_string()))?;
    let ws_addr = ws_listener.local_addr().map_err(|e| CliError::Failure(e.to_string()))?;
    announce(format!("broker listening on tcp://{tcp_addr}"));
    announce(format!("broker listening on ws://{ws_addr}{}", settings.ws_path));
    tokio::select! {
        r = broker.clone().serve_tcp(tcp_listener) => r.map_err(|e| CliError::Failure(e.to_string())),
        r = broker.serve_ws(ws_listener, settings.ws_path) => r.map_err(|e| CliError::Failure(e.to_string())),
        _ = shutdown_signal() => Ok(()),
    }
}
