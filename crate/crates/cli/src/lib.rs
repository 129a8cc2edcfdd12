//! The `hearthwire` command: key generation, the three daemons, the headless
//! emulator, a command sender and the latency benchmark.

pub mod bench;
pub mod daemons;
pub mod emulate;
pub mod keygen;
pub mod send;
pub mod settings;
pub mod ui;

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use hearthwire_client::exit;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "hearthwire", version, about = "Smart-home testbed: KDC, gateway, MQTT broker and emulator")]
pub struct Cli {
    /// TOML file with [kdc], [gateway], [broker], [emulator] and [client] sections.
    #[arg(long, global = true, env = "HEARTHWIRE_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an RSA key pair and optionally register it with a KDC.
    Keygen(keygen::KeygenArgs),
    /// Run one of the daemons until interrupted.
    #[command(subcommand)]
    Serve(daemons::ServeCommand),
    /// Run the headless emulator.
    Emulate(emulate::EmulateArgs),
    /// Send device commands through the gateway or the broker.
    Send(send::SendArgs),
    /// Measure and compare command round trips.
    #[command(subcommand)]
    Bench(bench::BenchCommand),
    /// Write the browser UI's config.json.
    UiConfig(ui::UiConfigArgs),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("address {0} is already in use")]
    AddressInUse(SocketAddr),
    #[error("{0}")]
    Auth(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Connectivity(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::BadConfig(_) => exit::USAGE,
            CliError::Auth(_) => exit::AUTH,
            CliError::Validation(_) => exit::VALIDATION,
            CliError::AddressInUse(_) | CliError::Connectivity(_) => exit::CONNECTIVITY,
            CliError::Failure(_) => exit::FAILURE,
        }
    }

    /// Maps an error carrying one of the shared exit codes.
    pub fn from_code(code: i32, message: String) -> Self {
        match code {
            exit::USAGE => CliError::Usage(message),
            exit::AUTH => CliError::Auth(message),
            exit::VALIDATION => CliError::Validation(message),
            exit::CONNECTIVITY => CliError::Connectivity(message),
            _ => CliError::Failure(message),
        }
    }

    pub fn bind(addr: SocketAddr, e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::AddrInUse {
            CliError::AddressInUse(addr)
        } else {
            CliError::Connectivity(format!("cannot bind {addr}: {e}"))
        }
    }
}

pub async fn run(cli: Cli) -> Result<(), CliError> {
    let file = settings::FileConfig::load_optional(cli.config.as_deref())?;
    match cli.command {
        Command::Keygen(args) => keygen::run(args).await,
        Command::Serve(cmd) => daemons::run(cmd, &file).await,
        Command::Emulate(args) => emulate::run(args, &file).await,
        Command::Send(args) => send::run(args, &file).await,
        Command::Bench(cmd) => bench::run(cmd).await,
        Command::UiConfig(args) => ui::run(args, &file),
    }
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = ctrl_c => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => ctrl_c.await,
        }
    }
    #[cfg(not(unix))]
    ctrl_c.await;
}

/// Prints one line to stdout and flushes, so a parent process reading the
/// pipe sees the bound address immediately.
pub(crate) fn announce(line: impl std::fmt::Display) {
    use std::io::Write;
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}
