use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use hearthwire_core::{Clock, PublicKey};
use hearthwire_kdc::{KdcClient, KdcClientError};
use parking_lot::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KeyError {
    #[error("no key registered for client {0:?}")]
    UnknownClient(String),
    #[error("key lookup failed: {0}")]
    Unavailable(String),
}

/// Where the gateway gets client public keys from.
pub enum KeySource {
    /// Fetched from a KDC. With a non-zero TTL, keys are cached for that long;
    /// with zero every verification fetches afresh.
    Kdc {
        client: KdcClient,
        ttl: Duration,
        cache: Mutex<HashMap<String, (PublicKey, u64)>>,
    },
    /// A fixed set of keys, for tests and offline setups.
    Fixed(HashMap<String, PublicKey>),
}

impl KeySource {
    pub fn kdc(client: KdcClient, ttl: Duration) -> Self {
        KeySource::Kdc {
            client,
            ttl,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn fixed(keys: impl IntoIterator<Item = (String, PublicKey)>) -> Self {
        KeySource::Fixed(keys.into_iter().collect())
    }

    pub async fn resolve(&self, client_id: &str, clock: &Arc<dyn Clock>) -> Result<PublicKey, KeyError> {
        match self {
            KeySource::Fixed(keys) => keys
                .get(client_id)
                .cloned()
                .ok_or_else(|| KeyError::UnknownClient(client_id.to_owned())),
            KeySource::Kdc { client, ttl, cache } => {
                let ttl_ms = ttl.as_millis() as u64;
                if ttl_ms > 0 {
                    if let Some((key, fetched)) = cache.lock().get(client_id) {
                        if clock.now_ms().saturating_sub(*fetched) < ttl_ms {
                            return Ok(key.clone());
                        }
                    }
                }
                let key = client.get_key(client_id).await.map_err(|e| match e {
                    KdcClientError::NotFound(id) => KeyError::UnknownClient(id),
                    other => KeyError::Unavailable(other.to_string()),
                })?;
                if ttl_ms > 0 {
                    cache.lock().insert(client_id.to_owned(), (key.clone(), clock.now_ms()));
                }
                Ok(key)
            }
        }
    }

    /// Drops any cached key for `client_id`.
    pub fn invalidate(&self, client_id: &str) {
        if let KeySource::Kdc { cache, .. } = self {
            cache.lock().remove(client_id);
        }
    }
}
