use std::path::PathBuf;

use clap::Args;
use hearthwire_core::{DeviceId, DeviceKind, HomeRegistry};
use hearthwire_mqtt::Endpoint;
use serde::{Deserialize, Serialize};

use crate::settings::{load_registry, FileConfig, DEFAULT_BROKER_WS_PORT, DEFAULT_GATEWAY_PORT};
use crate::{announce, CliError};

#[derive(Debug, Args)]
pub struct UiConfigArgs {
    #[arg(long, env = "HEARTHWIRE_GATEWAY_URL")]
    pub gateway: Option<String>,
    /// Must be a ws:// URL; browsers cannot open raw TCP.
    #[arg(long, env = "HEARTHWIRE_BROKER_WS_URL")]
    pub broker_ws: Option<String>,
    /// Emulator HTTP endpoint, if the UI should show its state.
    #[arg(long, env = "HEARTHWIRE_EMULATOR_URL")]
    pub emulator: Option<String>,
    #[arg(long, env = "HEARTHWIRE_REGISTRY")]
    pub registry: Option<PathBuf>,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiDevice {
    pub id: DeviceId,
    pub kind: DeviceKind,
    pub room: String,
}

/// The document the static UI fetches at load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiConfig {
    pub gateway_url: String,
    pub broker_ws_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emulator_url: Option<String>,
    pub topic_prefix: String,
    pub devices: Vec<UiDevice>,
    pub layout: Option<serde_json::Value>,
}

impl UiConfig {
    pub fn build(
        registry: &HomeRegistry,
        gateway_url: String,
        broker_ws_url: String,
        emulator_url: Option<String>,
    ) -> Result<Self, CliError> {
        match broker_ws_url.parse::<Endpoint>() {
            Ok(Endpoint::WebSocket(_)) => {}
            _ => {
                return Err(CliError::BadConfig(format!(
                    "broker URL {broker_ws_url:?} must be ws://host:port/path"
                )))
            }
        }
        let config = registry.to_config();
        Ok(UiConfig {
            gateway_url,
            broker_ws_url,
            emulator_url,
            topic_prefix: config.topic_prefix,
            devices: config
                .devices
                .into_iter()
                .map(|d| UiDevice {
                    id: d.id,
                    kind: d.kind,
                    room: d.room,
                })
                .collect(),
            layout: config.layout,
        })
    }
}

pub fn run(args: UiConfigArgs, file: &FileConfig) -> Result<(), CliError> {
    let registry_path = args.registry.or_else(|| file.gateway.registry.clone());
    let registry = load_registry(registry_path.as_deref())?;
    let gateway = args
        .gateway
        .or_else(|| file.client.gateway.clone())
        .unwrap_or_else(|| format!("http://127.0.0.1:{DEFAULT_GATEWAY_PORT}"));
    let ws_path = file.broker.ws_path.as_deref().unwrap_or(hearthwire_mqtt::ws::DEFAULT_PATH);
    let ws_port = file.broker.ws_port.unwrap_or(DEFAULT_BROKER_WS_PORT);
    let broker_ws = args
        .broker_ws
        .unwrap_or_else(|| format!("ws://127.0.0.1:{ws_port}{ws_path}"));
    let ui = UiConfig::build(&registry, gateway, broker_ws, args.emulator)?;
    let body = serde_json::to_string_pretty(&ui).expect("ui config serializes");
    match args.out {
        None => announce(body),
        Some(path) => std::fs::write(&path, body + "\n").map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?,
    }
    Ok(())
}
