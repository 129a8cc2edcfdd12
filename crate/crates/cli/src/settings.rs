//! Settings resolution. Every value comes from, in order: a command-line flag,
//! a `HEARTHWIRE_*` environment variable (clap folds these two together), the
//! TOML file given with `--config`, then a built-in default.

use std::net::{IpAddr, Ipv4Addr};
use std::path::{Path, PathBuf};

use clap::Args;
use hearthwire_core::{HashAlg, HomeRegistry};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_KDC_PORT: u16 = 5001;
pub const DEFAULT_GATEWAY_PORT: u16 = 5000;
pub const DEFAULT_BROKER_PORT: u16 = 1883;
pub const DEFAULT_BROKER_WS_PORT: u16 = 9001;
pub const DEFAULT_POLL_INTERVAL_MS: u64 = 500;
pub const DEFAULT_FRESHNESS_MS: u64 = 30_000;
const LOCALHOST: IpAddr = IpAddr::V4(Ipv4Addr::LOCALHOST);

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub kdc: KdcFile,
    pub gateway: GatewayFile,
    pub broker: BrokerFile,
    pub emulator: EmulatorFile,
    pub client: ClientFile,
}

#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct KdcFile {
    #[arg(long, env = "HEARTHWIRE_KDC_BIND")]
    pub bind: Option<IpAddr>,
    #[arg(long, env = "HEARTHWIRE_KDC_PORT")]
    pub port: Option<u16>,
    #[arg(long, env = "HEARTHWIRE_KDC_SNAPSHOT")]
    pub snapshot: Option<PathBuf>,
    #[arg(long, env = "HEARTHWIRE_KDC_TOKEN")]
    pub token: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayFile {
    #[arg(long, env = "HEARTHWIRE_GATEWAY_BIND")]
    pub bind: Option<IpAddr>,
    #[arg(long, env = "HEARTHWIRE_GATEWAY_PORT")]
    pub port: Option<u16>,
    #[arg(long, env = "HEARTHWIRE_KDC_URL")]
    pub kdc: Option<String>,
    #[arg(long, env = "HEARTHWIRE_REGISTRY")]
    pub registry: Option<PathBuf>,
    #[arg(long, env = "HEARTHWIRE_FRESHNESS_MS")]
    pub freshness_ms: Option<u64>,
    #[arg(long, env = "HEARTHWIRE_KEY_CACHE_TTL_MS")]
    pub key_cache_ttl_ms: Option<u64>,
    #[arg(long, env = "HEARTHWIRE_ALLOW_UNSIGNED", num_args = 0..=1, default_missing_value = "true")]
    pub allow_unsigned: Option<bool>,
    #[arg(long, env = "HEARTHWIRE_HASH")]
    pub hash: Option<String>,
    #[arg(long, env = "HEARTHWIRE_POLL_INTERVAL_MS")]
    pub poll_interval_ms: Option<u64>,
    #[arg(long, env = "HEARTHWIRE_BROKER_URL")]
    pub broker: Option<String>,
    #[arg(long, env = "HEARTHWIRE_BRIDGE_RESPOND", num_args = 0..=1, default_missing_value = "true")]
    pub bridge_respond: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct BrokerFile {
    #[arg(long, env = "HEARTHWIRE_BROKER_BIND")]
    pub bind: Option<IpAddr>,
    #[arg(long, env = "HEARTHWIRE_BROKER_PORT")]
    pub port: Option<u16>,
    #[arg(long, env = "HEARTHWIRE_BROKER_WS_PORT")]
    pub ws_port: Option<u16>,
    #[arg(long, env = "HEARTHWIRE_BROKER_WS_PATH")]
    pub ws_path: Option<String>,
    #[arg(long, env = "HEARTHWIRE_BROKER_POLICY")]
    pub policy: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct EmulatorFile {
    #[arg(long, env = "HEARTHWIRE_EMULATOR_MODE")]
    pub mode: Option<String>,
    #[arg(long, env = "HEARTHWIRE_GATEWAY_URL")]
    pub gateway: Option<String>,
    #[arg(long, env = "HEARTHWIRE_BROKER_URL")]
    pub broker: Option<String>,
    #[arg(long, env = "HEARTHWIRE_POLL_INTERVAL_MS")]
    pub poll_interval_ms: Option<u64>,
    #[arg(long, env = "HEARTHWIRE_EMULATOR_BIND")]
    pub bind: Option<IpAddr>,
    #[arg(long, env = "HEARTHWIRE_EMULATOR_HTTP_PORT")]
    pub http_port: Option<u16>,
    #[arg(long, env = "HEARTHWIRE_REGISTRY")]
    pub registry: Option<PathBuf>,
    #[arg(long, env = "HEARTHWIRE_EMULATOR_CLIENT_ID")]
    pub client_id: Option<String>,
    #[arg(long, env = "HEARTHWIRE_EMULATOR_LOG_FILE")]
    pub log_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct ClientFile {
    #[arg(long, env = "HEARTHWIRE_CLIENT_ID")]
    pub client_id: Option<String>,
    #[arg(long, env = "HEARTHWIRE_KEY")]
    pub key: Option<PathBuf>,
    #[arg(long, env = "HEARTHWIRE_GATEWAY_URL")]
    pub gateway: Option<String>,
    #[arg(long, env = "HEARTHWIRE_BROKER_URL")]
    pub broker: Option<String>,
    #[arg(long, env = "HEARTHWIRE_REGISTRY")]
    pub registry: Option<PathBuf>,
    #[arg(long, env = "HEARTHWIRE_HASH")]
    pub hash: Option<String>,
    #[arg(long, env = "HEARTHWIRE_TIMEOUT_MS")]
    pub timeout_ms: Option<u64>,
}

impl FileConfig {
    pub fn parse(raw: &str) -> Result<Self, CliError> {
        toml::from_str(raw).map_err(|e| CliError::BadConfig(e.message().to_owned()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::BadConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&raw).map_err(|e| CliError::BadConfig(format!("{}: {e}", path.display())))
    }

    /// Missing path means no file: every value falls through to defaults.
    pub fn load_optional(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(FileConfig::default()), Self::load)
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn parse_hash(raw: &str) -> Result<HashAlg, CliError> {
    raw.parse().map_err(CliError::BadConfig)
}

pub fn load_registry(path: Option<&Path>) -> Result<HomeRegistry, CliError> {
    match path {
        None => Ok(HomeRegistry::default_home()),
        Some(p) => HomeRegistry::load(p).map_err(|e| CliError::BadConfig(format!("{}: {e}", p.display()))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdcSettings {
    pub bind: IpAddr,
    pub port: u16,
    pub snapshot: Option<PathBuf>,
    pub token: Option<String>,
}

impl KdcSettings {
    pub fn resolve(flags: KdcFile, file: &KdcFile) -> Self {
        KdcSettings {
            bind: pick(flags.bind, file.bind, LOCALHOST),
            port: pick(flags.port, file.port, DEFAULT_KDC_PORT),
            snapshot: flags.snapshot.or_else(|| file.snapshot.clone()),
            token: flags.token.or_else(|| file.token.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatewaySettings {
    pub bind: IpAddr,
    pub port: u16,
    pub kdc: String,
    pub registry: Option<PathBuf>,
    /// Zero disables the freshness check.
    pub freshness_ms: u64,
    pub key_cache_ttl_ms: u64,
    pub allow_unsigned: bool,
    pub hash: String,
    pub poll_interval_ms: u64,
    pub broker: Option<String>,
    pub bridge_respond: bool,
}

impl GatewaySettings {
    pub fn resolve(flags: GatewayFile, file: &GatewayFile) -> Self {
        GatewaySettings {
            bind: pick(flags.bind, file.bind, LOCALHOST),
            port: pick(flags.port, file.port, DEFAULT_GATEWAY_PORT),
            kdc: pick(flags.kdc, file.kdc.clone(), format!("http://127.0.0.1:{DEFAULT_KDC_PORT}")),
            registry: flags.registry.or_else(|| file.registry.clone()),
            freshness_ms: pick(flags.freshness_ms, file.freshness_ms, DEFAULT_FRESHNESS_MS),
            key_cache_ttl_ms: pick(flags.key_cache_ttl_ms, file.key_cache_ttl_ms, 0),
            allow_unsigned: pick(flags.allow_unsigned, file.allow_unsigned, false),
            hash: pick(flags.hash, file.hash.clone(), "md5".to_owned()),
            poll_interval_ms: pick(flags.poll_interval_ms, file.poll_interval_ms, DEFAULT_POLL_INTERVAL_MS),
            broker: flags.broker.or_else(|| file.broker.clone()),
            bridge_respond: pick(flags.bridge_respond, file.bridge_respond, false),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrokerSettings {
    pub bind: IpAddr,
    pub port: u16,
    pub ws_port: u16,
    pub ws_path: String,
    pub policy: Option<PathBuf>,
}

impl BrokerSettings {
    pub fn resolve(flags: BrokerFile, file: &BrokerFile) -> Self {
        BrokerSettings {
            bind: pick(flags.bind, file.bind, LOCALHOST),
            port: pick(flags.port, file.port, DEFAULT_BROKER_PORT),
            ws_port: pick(flags.ws_port, file.ws_port, DEFAULT_BROKER_WS_PORT),
            ws_path: pick(flags.ws_path, file.ws_path.clone(), hearthwire_mqtt::ws::DEFAULT_PATH.to_owned()),
            policy: flags.policy.or_else(|| file.policy.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmulatorSettings {
    pub mode: String,
    pub gateway: String,
    pub broker: String,
    pub poll_interval_ms: u64,
    pub bind: IpAddr,
    /// Serve `/emulator/state` and friends when set.
    pub http_port: Option<u16>,
    pub registry: Option<PathBuf>,
    pub client_id: String,
    pub log_file: Option<PathBuf>,
}

impl EmulatorSettings {
    pub fn resolve(flags: EmulatorFile, file: &EmulatorFile) -> Self {
        EmulatorSettings {
            mode: pick(flags.mode, file.mode.clone(), "http-poll".to_owned()),
            gateway: pick(flags.gateway, file.gateway.clone(), format!("http://127.0.0.1:{DEFAULT_GATEWAY_PORT}")),
            broker: pick(flags.broker, file.broker.clone(), format!("tcp://127.0.0.1:{DEFAULT_BROKER_PORT}")),
            poll_interval_ms: pick(flags.poll_interval_ms, file.poll_interval_ms, DEFAULT_POLL_INTERVAL_MS),
            bind: pick(flags.bind, file.bind, LOCALHOST),
            http_port: flags.http_port.or(file.http_port),
            registry: flags.registry.or_else(|| file.registry.clone()),
            client_id: pick(flags.client_id, file.client_id.clone(), "emulator".to_owned()),
            log_file: flags.log_file.or_else(|| file.log_file.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientSettings {
    pub client_id: String,
    pub key: Option<PathBuf>,
    pub gateway: Option<String>,
    pub broker: Option<String>,
    pub registry: Option<PathBuf>,
    pub hash: String,
    pub timeout_ms: u64,
}

impl ClientSettings {
    /// A gateway or broker given on the command line hides both file targets,
    /// so a flag never ends up combined with the other transport from the file.
    pub fn resolve(flags: ClientFile, file: &ClientFile) -> Self {
        let (gateway, broker) = if flags.gateway.is_some() || flags.broker.is_some() {
            (flags.gateway, flags.broker)
        } else {
            (file.gateway.clone(), file.broker.clone())
        };
        ClientSettings {
            client_id: pick(flags.client_id, file.client_id.clone(), "client1".to_owned()),
            key: flags.key.or_else(|| file.key.clone()),
            gateway,
            broker,
            registry: flags.registry.or_else(|| file.registry.clone()),
            hash: pick(flags.hash, file.hash.clone(), "md5".to_owned()),
            timeout_ms: pick(flags.timeout_ms, file.timeout_ms, 5_000),
        }
    }
}
