use std::time::Duration;

use clap::Args;
use hearthwire_client::{HttpSender, MqttCommander};
use hearthwire_core::{decode_payload, LogLevel, PrivateKey};
use hearthwire_mqtt::Endpoint;

use crate::settings::{load_registry, parse_hash, ClientFile, ClientSettings, FileConfig};
use crate::{announce, CliError};

#[derive(Debug, Args)]
pub struct SendArgs {
    #[command(flatten)]
    pub settings: ClientFile,
    /// Device id; pair each with a `--params` in the same order.
    #[arg(long = "device", value_name = "ID")]
    pub devices: Vec<String>,
    /// Params object as JSON, e.g. '{"power":true,"color":"#ffffff"}'.
    #[arg(long = "params", value_name = "JSON")]
    pub params: Vec<String>,
    /// A complete device payload, sent byte for byte over MQTT.
    #[arg(long = "payload", value_name = "JSON")]
    pub payloads: Vec<String>,
    /// Use the gateway's unsigned route (only if the gateway allows it).
    #[arg(long)]
    pub unsigned: bool,
    /// Echo the command and response log lines to stderr.
    #[arg(long, short)]
    pub verbose: bool,
}

/// Device payloads in the order given: `--device/--params` pairs first,
/// then raw `--payload`s.
pub fn collect_payloads(args: &SendArgs) -> Result<Vec<String>, CliError> {
    if args.devices.len() != args.params.len() {
        return Err(CliError::Usage(format!(
            "{} --device but {} --params; give one --params per --device",
            args.devices.len(),
            args.params.len()
        )));
    }
    let mut out = Vec::new();
    for (device, params) in args.devices.iter().zip(&args.params) {
        let params: serde_json::Value = serde_json::from_str(params)
            .map_err(|e| CliError::Usage(format!("--params for {device} is not JSON: {e}")))?;
        out.push(serde_json::json!({ "device": device, "params": params }).to_string());
    }
    out.extend(args.payloads.iter().cloned());
    if out.is_empty() {
        return Err(CliError::Usage("nothing to send: give --device/--params or --payload".into()));
    }
    Ok(out)
}

pub async fn run(args: SendArgs, file: &FileConfig) -> Result<(), CliError> {
    let payloads = collect_payloads(&args)?;
    let settings = ClientSettings::resolve(args.settings.clone(), &file.client);
    match (&settings.gateway, &settings.broker) {
        (Some(_), Some(_)) => Err(CliError::Usage("give either --gateway or --broker, not both".into())),
        (None, None) => Err(CliError::Usage("no target: give --gateway or --broker".into())),
        (Some(gateway), None) => send_http(gateway, &settings, &payloads, args.unsigned, args.verbose).await,
        (None, Some(broker)) => send_mqtt(broker, &settings, &payloads, args.verbose).await,
    }
}

async fn send_http(
    gateway: &str,
    settings: &ClientSettings,
    payloads: &[String],
    unsigned: bool,
    verbose: bool,
) -> Result<(), CliError> {
    let commands = payloads
        .iter()
        .map(|p| decode_payload(p.as_bytes()).map_err(|e| CliError::Validation(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let gateway = gateway.trim_end_matches('/');
    let sender = if unsigned {
        HttpSender::unsigned(gateway, &settings.client_id)
    } else {
        let path = settings
            .key
            .as_deref()
            .ok_or_else(|| CliError::Usage("--key is required for signed commands".into()))?;
        let key = PrivateKey::load(path).map_err(|e| CliError::BadConfig(format!("{}: {e}", path.display())))?;
        HttpSender::new(gateway, &settings.client_id, key).with_hash(parse_hash(&settings.hash)?)
    };
    let sent = sender
        .send(commands)
        .await
        .map_err(|e| CliError::from_code(e.exit_code(), e.to_string()))?;
    for r in &sent.results {
        announce(&r.response);
    }
    if verbose {
        eprintln!(
            "round trip {:.3} ms (sign {:.3}, verify {:.3}), {} bytes",
            sent.round_trip_ms, sent.sign_ms, sent.verify_ms, sent.wire_bytes
        );
    }
    Ok(())
}

async fn send_mqtt(broker: &str, settings: &ClientSettings, payloads: &[String], verbose: bool) -> Result<(), CliError> {
    let endpoint: Endpoint = broker.parse().map_err(|e: hearthwire_mqtt::EndpointError| CliError::BadConfig(e.to_string()))?;
    let registry = load_registry(settings.registry.as_deref())?;
    let fail = |e: hearthwire_client::CommanderError| CliError::from_code(e.exit_code(), e.to_string());
    let mut commander = MqttCommander::connect(&endpoint, &settings.client_id, registry)
        .await
        .map_err(fail)?
        .with_timeout(Duration::from_millis(settings.timeout_ms));
    let mut outcome = Ok(());
    for payload in payloads {
        match commander.send_payload(payload.as_bytes()).await {
            Ok(reply) => announce(&reply.response.response),
            Err(e) => {
                outcome = Err(fail(e));
                break;
            }
        }
    }
    if verbose {
        for entry in commander.log().entries() {
            if matches!(entry.level, LogLevel::Command | LogLevel::Response) {
                eprintln!("{}: {}", entry.level, entry.message);
            }
        }
    }
    commander.disconnect();
    outcome
}
