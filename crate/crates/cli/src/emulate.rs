use std::fs::OpenOptions;
use std::io::Write;
use std::net::SocketAddr;
use std::time::Duration;

use clap::Args;
use hearthwire_emulator::{run_http_poll, run_mqtt, Emulator, EmulatorConfig, EmulatorServer, Poller};
use hearthwire_mqtt::{Backoff, Endpoint};

use crate::settings::{load_registry, EmulatorFile, EmulatorSettings, FileConfig};
use crate::{shutdown_signal, CliError};

#[derive(Debug, Args)]
pub struct EmulateArgs {
    /// `--mode http-poll` or `--mode mqtt`, plus the target for that mode.
    #[command(flatten)]
    pub settings: EmulatorFile,
    #[arg(long)]
    pub print_config: bool,
}

pub async fn run(args: EmulateArgs, file: &FileConfig) -> Result<(), CliError> {
    let settings = EmulatorSettings::resolve(args.settings, &file.emulator);
    if args.print_config {
        crate::announce(serde_json::to_string_pretty(&settings).expect("settings serialize"));
        return Ok(());
    }
    let registry = load_registry(settings.registry.as_deref())?;
    let interval = Duration::from_millis(settings.poll_interval_ms);
    let sink: Box<dyn Write + Send> = match &settings.log_file {
        Some(path) => Box::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| CliError::BadConfig(format!("{}: {e}", path.display())))?,
        ),
        None => Box::new(std::io::stdout()),
    };

    let emulator = Emulator::new(registry.clone());
    // Status lines go to stderr; stdout carries the NDJSON log by default.
    match settings.mode.as_str() {
        "http-poll" => {
            let mut config = EmulatorConfig::http_poll(&settings.gateway);
            config.poll_interval = interval;
            config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let poller = Poller::new(emulator.clone(), settings.gateway.trim_end_matches('/'));
            let _server = start_server(&settings, &emulator, Some(poller.clone())).await?;
            emulator.log().set_sink(sink);
            eprintln!("emulator polling {} every {} ms", settings.gateway, settings.poll_interval_ms);
            tokio::select! {
                _ = run_http_poll(poller, interval) => {}
                _ = shutdown_signal() => {}
            }
        }
        "mqtt" => {
            let endpoint: Endpoint = settings
                .broker
                .parse()
                .map_err(|e: hearthwire_mqtt::EndpointError| CliError::BadConfig(e.to_string()))?;
            let _server = start_server(&settings, &emulator, None).await?;
            emulator.log().set_sink(sink);
            eprintln!("emulator subscribing on {endpoint} under {}", registry.device_filter());
            let _handle = run_mqtt(emulator.clone(), endpoint, &settings.client_id, Backoff::default());
            shutdown_signal().await;
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown emulator mode {other:?} (expected http-poll or mqtt)"
            )))
        }
    }
    Ok(())
}

async fn start_server(
    settings: &EmulatorSettings,
    emulator: &Emulator,
    poller: Option<Poller>,
) -> Result<Option<EmulatorServer>, CliError> {
    let Some(port) = settings.http_port else {
        return Ok(None);
    };
    let addr = SocketAddr::new(settings.bind, port);
    let server = EmulatorServer::start(addr, emulator.clone(), poller)
        .await
        .map_err(|e| CliError::bind(addr, e))?;
    eprintln!("emulator listening on {}", server.url());
    Ok(Some(server))
}
