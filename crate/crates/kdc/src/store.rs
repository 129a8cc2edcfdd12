use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hearthwire_core::{Clock, HashAlg, PublicKey, SystemClock, Verdict};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRecord {
    pub client_id: String,
    /// SubjectPublicKeyInfo PEM.
    pub public_key: String,
    pub registered_at: u64,
}

#[derive(Debug, Error)]
pub enum KdcError {
    #[error("malformed key: {0}")]
    MalformedKey(String),
    #[error("no key registered for {0:?}")]
    NotFound(String),
    #[error("snapshot error: {0}")]
    Snapshot(#[from] std::io::Error),
    #[error("snapshot is not valid JSON: {0}")]
    SnapshotFormat(#[from] serde_json::Error),
}

struct Entry {
    record: KeyRecord,
    key: PublicKey,
}

/// In-memory key store. Readers never see a half-written record: each entry
/// is swapped in whole under the write lock. With a snapshot path, the map is
/// loaded at startup and rewritten after every change.
pub struct KeyStore {
    entries: RwLock<BTreeMap<String, Arc<Entry>>>,
    snapshot: Option<PathBuf>,
    clock: Arc<dyn Clock>,
}

impl Default for KeyStore {
    fn default() -> Self {
        KeyStore::in_memory(Arc::new(SystemClock))
    }
}

impl KeyStore {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        KeyStore {
            entries: RwLock::new(BTreeMap::new()),
            snapshot: None,
            clock,
        }
    }

    /// Opens a store backed by `path`; a missing file means an empty store.
    pub fn with_snapshot(path: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Result<Self, KdcError> {
        let path = path.into();
        let mut entries = BTreeMap::new();
        if path.exists() {
            let records: Vec<KeyRecord> = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            for record in records {
                let key = PublicKey::from_pem(&record.public_key)
                    .map_err(|e| KdcError::MalformedKey(format!("{}: {e}", record.client_id)))?;
                entries.insert(record.client_id.clone(), Arc::new(Entry { record, key }));
            }
        }
        Ok(KeyStore {
            entries: RwLock::new(entries),
            snapshot: Some(path),
            clock,
        })
    }

    pub fn register(&self, client_id: &str, public_key_pem: &str) -> Result<KeyRecord, KdcError> {
        if client_id.trim().is_empty() {
            return Err(KdcError::MalformedKey("empty client_id".into()));
        }
        let key = PublicKey::from_pem(public_key_pem).map_err(|e| KdcError::MalformedKey(e.to_string()))?;
        let record = KeyRecord {
            client_id: client_id.to_owned(),
            public_key: key.to_pem(),
            registered_at: self.clock.now_ms(),
        };
        let mut entries = self.entries.write();
        entries.insert(client_id.to_owned(), Arc::new(Entry { record: record.clone(), key }));
        if let Some(path) = &self.snapshot {
            write_snapshot(path, entries.values().map(|e| &e.record))?;
        }
        Ok(record)
    }

    pub fn get(&self, client_id: &str) -> Option<KeyRecord> {
        self.entries.read().get(client_id).map(|e| e.record.clone())
    }

    pub fn public_key(&self, client_id: &str) -> Option<PublicKey> {
        self.entries.read().get(client_id).map(|e| e.key.clone())
    }

    /// Checks `signature` against `digest` with the stored key. The hash is
    /// inferred from the digest length (16 bytes MD5, 32 bytes SHA-256); a
    /// signature of the wrong length is simply invalid.
    pub fn verify_for(&self, client_id: &str, digest: &[u8], signature: &[u8]) -> Result<Verdict, KdcError> {
        let entry = self
            .entries
            .read()
            .get(client_id)
            .cloned()
            .ok_or_else(|| KdcError::NotFound(client_id.to_owned()))?;
        let Some(alg) = HashAlg::from_output_len(digest.len()) else {
            return Ok(Verdict::Invalid);
        };
        Ok(entry.key.verify_digest(alg, digest, signature).unwrap_or(Verdict::Invalid))
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn client_ids(&self) -> Vec<String> {
        self.entries.read().keys().cloned().collect()
    }
}

fn write_snapshot<'a>(path: &Path, records: impl Iterator<Item = &'a KeyRecord>) -> Result<(), KdcError> {
    let records: Vec<&KeyRecord> = records.collect();
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut f, &records)?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
