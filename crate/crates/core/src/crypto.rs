//! Digests, RSA key handling and the "encrypt the hash with the private key"
//! signature used for intents.
//!
//! Signatures are PKCS#1 v1.5 (deterministic) over the digest of the
//! canonical envelope bytes. MD5 is the default digest for parity with the
//! original deployment; it is broken for collision resistance, so SHA-256 can
//! be selected anywhere a [`HashAlg`] is accepted.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use md5::Md5;
use rsa::pkcs8::{DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey, LineEnding};
use rsa::traits::PublicKeyParts;
use rsa::{Pkcs1v15Sign, RsaPrivateKey, RsaPublicKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::intent::{canonical_bytes, IntentEnvelope, SignedIntentPacket};

pub const SUPPORTED_KEY_BITS: [usize; 3] = [1024, 2048, 4096];
pub const DEFAULT_KEY_BITS: usize = 2048;

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("unsupported key size {0} (expected one of 1024, 2048, 4096)")]
    UnsupportedKeySize(usize),
    #[error("malformed signature: {0}")]
    MalformedSignature(String),
    #[error("malformed key: {0}")]
    MalformedKey(String),
    #[error("key generation failed: {0}")]
    KeyGeneration(String),
    #[error("signing failed: {0}")]
    Signing(String),
    #[error("key file error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashAlg {
    #[default]
    Md5,
    Sha256,
}

impl HashAlg {
    pub fn digest(self, data: &[u8]) -> Vec<u8> {
        match self {
            HashAlg::Md5 => md5_digest(data).to_vec(),
            HashAlg::Sha256 => Sha256::digest(data).to_vec(),
        }
    }

    pub fn output_len(self) -> usize {
        match self {
            HashAlg::Md5 => 16,
            HashAlg::Sha256 => 32,
        }
    }

    pub fn from_output_len(len: usize) -> Option<Self> {
        match len {
            16 => Some(HashAlg::Md5),
            32 => Some(HashAlg::Sha256),
            _ => None,
        }
    }

    fn padding(self) -> Pkcs1v15Sign {
        match self {
            HashAlg::Md5 => Pkcs1v15Sign::new::<Md5>(),
            HashAlg::Sha256 => Pkcs1v15Sign::new::<Sha256>(),
        }
    }
}

impl fmt::Display for HashAlg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HashAlg::Md5 => "md5",
            HashAlg::Sha256 => "sha256",
        })
    }
}

impl FromStr for HashAlg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md5" => Ok(HashAlg::Md5),
            "sha256" | "sha-256" => Ok(HashAlg::Sha256),
            other => Err(format!("unknown hash algorithm {other:?}")),
        }
    }
}

pub fn md5_digest(data: &[u8]) -> [u8; 16] {
    Md5::digest(data).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid,
}

impl Verdict {
    pub fn is_valid(self) -> bool {
        self == Verdict::Valid
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey(RsaPublicKey);

#[derive(Clone)]
pub struct PrivateKey(RsaPrivateKey);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({} bits)", self.bits())
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PrivateKey({} bits)", self.0.n().bits())
    }
}

impl PublicKey {
    pub fn bits(&self) -> usize {
        self.0.n().bits()
    }

    /// Modulus size in bytes; every valid signature has exactly this length.
    pub fn size(&self) -> usize {
        self.0.size()
    }

    pub fn to_pem(&self) -> String {
        self.0
            .to_public_key_pem(LineEnding::LF)
            .expect("public key PEM encoding is infallible")
    }

    pub fn from_pem(pem: &str) -> Result<Self, CryptoError> {
        RsaPublicKey::from_public_key_pem(pem.trim())
            .map(PublicKey)
            .map_err(|e| CryptoError::MalformedKey(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CryptoError> {
        Self::from_pem(&std::fs::read_to_string(path)?)
    }

    /// Opens `signature` and compares it with `digest` (whose length picks the hash).
    pub fn verify_digest(&self, alg: HashAlg, digest: &[u8], signature: &[u8]) -> Result<Verdict, CryptoError> {
        if signature.len() != self.size() {
            return Err(CryptoError::MalformedSignature(format!(
                "expected {} bytes, got {}",
                self.size(),
                signature.len()
            )));
        }
        if digest.len() != alg.output_len() {
            return Ok(Verdict::Invalid);
        }
        match self.0.verify(alg.padding(), digest, signature) {
            Ok(()) => Ok(Verdict::Valid),
            Err(_) => Ok(Verdict::Invalid),
        }
    }
}

impl PrivateKey {
    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.0.to_public_key())
    }

    pub fn to_pem(&self) -> String {
        self.0
            .to_pkcs8_pem(LineEnding::LF)
            .expect("private key PEM encoding is infallible")
            .to_string()
    }

    pub fn from_pem(pem: &str) -> Result<Self, CryptoError> {
        RsaPrivateKey::from_pkcs8_pem(pem.trim())
            .map(PrivateKey)
            .map_err(|e| CryptoError::MalformedKey(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CryptoError> {
        Self::from_pem(&std::fs::read_to_string(path)?)
    }

    pub fn sign_digest(&self, alg: HashAlg, digest: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.0
            .sign(alg.padding(), digest)
            .map_err(|e| CryptoError::Signing(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct RsaKeyPair {
    pub private: PrivateKey,
    pub public: PublicKey,
}

impl RsaKeyPair {
    pub fn bits(&self) -> usize {
        self.public.bits()
    }

    /// Writes `{client_id}.key` and `{client_id}.pub` into `dir`.
    pub fn write_files(&self, dir: impl AsRef<Path>, client_id: &str) -> Result<KeyFiles, CryptoError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let files = KeyFiles {
            private: dir.join(format!("{client_id}.key")),
            public: dir.join(format!("{client_id}.pub")),
        };
        std::fs::write(&files.private, self.private.to_pem())?;
        std::fs::write(&files.public, self.public.to_pem())?;
        Ok(files)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyFiles {
    pub private: std::path::PathBuf,
    pub public: std::path::PathBuf,
}

pub fn generate_keypair(bits: usize) -> Result<RsaKeyPair, CryptoError> {
    if !SUPPORTED_KEY_BITS.contains(&bits) {
        return Err(CryptoError::UnsupportedKeySize(bits));
    }
    let key = RsaPrivateKey::new(&mut rand::rngs::OsRng, bits)
        .map_err(|e| CryptoError::KeyGeneration(e.to_string()))?;
    let private = PrivateKey(key);
    Ok(RsaKeyPair {
        public: private.public_key(),
        private,
    })
}

pub fn sign_intent(envelope: &IntentEnvelope, key: &PrivateKey, alg: HashAlg) -> Result<SignedIntentPacket, CryptoError> {
    let digest = alg.digest(&canonical_bytes(envelope));
    let signature = key.sign_digest(alg, &digest)?;
    Ok(SignedIntentPacket {
        envelope: envelope.clone(),
        signature,
    })
}

/// `Err(MalformedSignature)` when the signature cannot possibly be an RSA
/// signature for this key; `Ok(Invalid)` when it simply does not match.
pub fn verify_intent(packet: &SignedIntentPacket, key: &PublicKey, alg: HashAlg) -> Result<Verdict, CryptoError> {
    let digest = alg.digest(&canonical_bytes(&packet.envelope));
    key.verify_digest(alg, &digest, &packet.signature)
}
