use std::sync::Arc;
use std::time::{Duration, Instant};

use hearthwire_core::{DeviceId, HomeState, LogLevel};
use hearthwire_gateway::ROLE_HEADER;
use hearthwire_mqtt::Backoff;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Notify;

use crate::engine::Emulator;

#[derive(Debug, Error)]
pub enum PollError {
    #[error("gateway unreachable: {0}")]
    Unreachable(String),
    #[error("gateway answered {0}")]
    Status(u16),
    #[error("malformed state from gateway: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollReport {
    pub changed: Vec<DeviceId>,
    pub duration_ms: f64,
}

/// Fetches gateway state for one emulator.
#[derive(Clone)]
pub struct Poller {
    emulator: Emulator,
    http: reqwest::Client,
    state_url: String,
    wake: Arc<Notify>,
}

impl Poller {
    pub fn new(emulator: Emulator, gateway: &str) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(5))
            .build()
            .expect("static client config");
        Poller {
            emulator,
            http,
            state_url: format!("{}/api/state", gateway.trim_end_matches('/')),
            wake: Arc::new(Notify::new()),
        }
    }

    pub fn emulator(&self) -> &Emulator {
        &self.emulator
    }

    /// Cuts the current wait short in [`run_http_poll`].
    pub fn poll_soon(&self) {
        self.wake.notify_one();
    }

    pub async fn poll_once(&self) -> Result<PollReport, PollError> {
        let started = Instant::now();
        let resp = self
            .http
            .get(&self.state_url)
            .header(ROLE_HEADER, "emulator")
            .send()
            .await
            .map_err(|e| PollError::Unreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(PollError::Status(resp.status().as_u16()));
        }
        let body = resp.bytes().await.map_err(|e| PollError::Unreachable(e.to_string()))?;
        let remote: HomeState = serde_json::from_slice(&body).map_err(|e| PollError::Malformed(e.to_string()))?;
        let changed = self.emulator.sync_from(&remote);
        Ok(PollReport {
            changed,
            duration_ms: started.elapsed().as_secs_f64() * 1000.0,
        })
    }
}

/// Polls forever at `interval`. Outages are logged once when they start and
/// once when they end; retries back off up to five seconds.
pub async fn run_http_poll(poller: Poller, interval: Duration) {
    let log = poller.emulator.log().clone();
    let mut backoff = Backoff::new(interval, Duration::from_secs(5).max(interval));
    let mut healthy: Option<bool> = None;
    loop {
        let wait = match poller.poll_once().await {
            Ok(_) => {
                if healthy != Some(true) {
                    log.push(LogLevel::Connection, format!("Emulator connected to {}", poller.state_url));
                }
                healthy = Some(true);
                backoff.reset();
                interval
            }
            Err(PollError::Malformed(e)) => {
                log.push(LogLevel::Error, format!("Malformed state from gateway: {e}"));
                interval
            }
            Err(e) => {
                if healthy != Some(false) {
                    log.push(LogLevel::Error, format!("Cannot poll {}: {e}", poller.state_url));
                    log.push(LogLevel::Connection, "reconnecting");
                }
                healthy = Some(false);
                backoff.next_delay()
            }
        };
        tokio::select! {
            _ = tokio::time::sleep(wait) => {}
            _ = poller.wake.notified() => {}
        }
    }
}
