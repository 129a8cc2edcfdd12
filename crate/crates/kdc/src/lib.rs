//! Key distribution center: a registry of client public keys served over
//! HTTP, with an optional server-side verification endpoint.

pub mod client;
pub mod server;
pub mod store;

pub use client::{KdcClient, KdcClientError};
pub use server::{router, serve, KdcServer, KdcState};
pub use store::{KdcError, KeyRecord, KeyStore};
