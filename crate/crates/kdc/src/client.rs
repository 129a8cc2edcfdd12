use std::time::Duration;

use base64::Engine;
use hearthwire_core::{PublicKey, Verdict};
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::store::KeyRecord;

#[derive(Debug, Error)]
pub enum KdcClientError {
    #[error("no key registered for {0:?}")]
    NotFound(String),
    #[error("KDC rejected the request: {0}")]
    Unauthorized(String),
    #[error("KDC rejected the key: {0}")]
    BadRequest(String),
    #[error("KDC returned {status}: {body}")]
    Status { status: u16, body: String },
    #[error("KDC served a malformed key: {0}")]
    MalformedKey(String),
    #[error("cannot reach KDC: {0}")]
    Http(#[from] reqwest::Error),
}

impl KdcClientError {
    pub fn is_connectivity(&self) -> bool {
        matches!(self, KdcClientError::Http(e) if e.is_connect() || e.is_timeout() || e.is_request())
    }
}

#[derive(Deserialize)]
struct KeyBody {
    public_key: String,
}

#[derive(Deserialize)]
struct VerifyReply {
    valid: bool,
}

#[derive(Debug, Clone)]
pub struct KdcClient {
    base: String,
    http: reqwest::Client,
    token: Option<String>,
}

impl KdcClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .expect("HTTP client configuration is static");
        KdcClient {
            base: base_url.into().trim_end_matches('/').to_owned(),
            http,
            token: None,
        }
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn check(resp: reqwest::Response, client_id: &str) -> Result<reqwest::Response, KdcClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let body = resp.text().await.unwrap_or_default();
        Err(match status {
            StatusCode::NOT_FOUND => KdcClientError::NotFound(client_id.to_owned()),
            StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => KdcClientError::Unauthorized(body),
            StatusCode::BAD_REQUEST => KdcClientError::BadRequest(body),
            s => KdcClientError::Status { status: s.as_u16(), body },
        })
    }

    pub async fn register(&self, client_id: &str, key: &PublicKey) -> Result<KeyRecord, KdcClientError> {
        self.register_pem(client_id, &key.to_pem()).await
    }

    pub async fn register_pem(&self, client_id: &str, pem: &str) -> Result<KeyRecord, KdcClientError> {
        let mut req = self
            .http
            .post(format!("{}/kdc/keys", self.base))
            .json(&json!({ "client_id": client_id, "public_key": pem }));
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = Self::check(req.send().await?, client_id).await?;
        Ok(resp.json().await?)
    }

    pub async fn get_key(&self, client_id: &str) -> Result<PublicKey, KdcClientError> {
        let resp = self
            .http
            .get(format!("{}/kdc/keys/{}", self.base, client_id))
            .send()
            .await?;
        let body: KeyBody = Self::check(resp, client_id).await?.json().await?;
        PublicKey::from_pem(&body.public_key).map_err(|e| KdcClientError::MalformedKey(e.to_string()))
    }

    pub async fn verify(&self, client_id: &str, digest: &[u8], signature: &[u8]) -> Result<Verdict, KdcClientError> {
        let body = json!({
            "client_id": client_id,
            "digest_hex": hex::encode(digest),
            "signature_b64": base64::engine::general_purpose::STANDARD.encode(signature),
        });
        let resp = self.http.post(format!("{}/kdc/verify", self.base)).json(&body).send().await?;
        let reply: VerifyReply = Self::check(resp, client_id).await?.json().await?;
        Ok(if reply.valid { Verdict::Valid } else { Verdict::Invalid })
    }
}
