//! Shared model for the hearthwire smart-home testbed: device schemas,
//! signed intents, key handling and the event log.

pub mod canonical;
pub mod clock;
pub mod crypto;
pub mod device;
pub mod intent;
pub mod log;
pub mod presence;
pub mod registry;

pub use clock::{Clock, ManualClock, SystemClock};
pub use crypto::{
    generate_keypair, md5_digest, sign_intent, verify_intent, CryptoError, HashAlg, PrivateKey, PublicKey,
    RsaKeyPair, Verdict,
};
pub use device::{
    apply_command, decode_payload, encode_payload, validate_command, DecodeError, DeviceCommand, DeviceId,
    DeviceKind, DeviceResponse, DeviceState, DoorStatus, HDirection, Params, ValidationError,
};
pub use intent::{canonical_bytes, IntentEnvelope, PacketError, SignedIntentPacket};
pub use log::{EventLog, LogEntry, LogLevel};
pub use presence::{Presence, PresenceStatus};
pub use registry::{HomeRegistry, HomeState, RegistryError};
