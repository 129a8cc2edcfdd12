use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::policy::PolicyDocument;

pub const PERMISSIVE: &str = "permissive";
pub const DENY_ALL: &str = "deny-all";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read broker config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid broker config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("policy {name:?}: {reason}")]
    Policy { name: String, reason: String },
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
}

/// Broker settings: named policies, client bindings and limits.
///
/// `permissive` and `deny-all` are always available as policy names unless
/// the config file redefines them.
#[derive(Debug, Clone)]
pub struct BrokerConfig {
    pub policies: BTreeMap<String, PolicyDocument>,
    pub bindings: BTreeMap<String, String>,
    pub default_policy: String,
    /// Disconnect clients that publish outside their policy instead of
    /// silently dropping the message.
    pub strict: bool,
    pub connect_timeout: Duration,
    pub max_packet_size: usize,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        let mut policies = BTreeMap::new();
        policies.insert(PERMISSIVE.to_owned(), PolicyDocument::permissive());
        policies.insert(DENY_ALL.to_owned(), PolicyDocument::deny_all());
        BrokerConfig {
            policies,
            bindings: BTreeMap::new(),
            default_policy: PERMISSIVE.to_owned(),
            strict: false,
            connect_timeout: Duration::from_secs(10),
            max_packet_size: 1024 * 1024,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    policies: BTreeMap<String, Value>,
    #[serde(default)]
    bindings: BTreeMap<String, String>,
    default_policy: Option<String>,
    #[serde(default)]
    strict: bool,
    connect_timeout_ms: Option<u64>,
    max_packet_size: Option<usize>,
}

impl BrokerConfig {
    /// A config where every client is bound to `policy`.
    pub fn with_default_policy(policy: PolicyDocument) -> Self {
        let mut cfg = BrokerConfig::default();
        cfg.policies.insert("default".into(), policy);
        cfg.default_policy = "default".into();
        cfg
    }

    pub fn bind(mut self, client_id: impl Into<String>, policy_name: impl Into<String>) -> Self {
        self.bindings.insert(client_id.into(), policy_name.into());
        self
    }

    pub fn add_policy(mut self, name: impl Into<String>, policy: PolicyDocument) -> Self {
        self.policies.insert(name.into(), policy);
        self
    }

    /// Parses the JSON config. Policies may be written either in the native
    /// `{"statements": [...]}` form or as IAM-style `{"Statement": [...]}`.
    pub fn from_json(raw: &str) -> Result<Self, ConfigError> {
        let parsed: RawConfig = serde_json::from_str(raw)?;
        let mut cfg = BrokerConfig::default();
        for (name, doc) in parsed.policies {
            let policy = if doc.get("Statement").is_some() {
                PolicyDocument::from_iam_json(&doc.to_string()).map_err(|e| ConfigError::Policy {
                    name: name.clone(),
                    reason: e.to_string(),
                })?
            } else {
                serde_json::from_value(doc).map_err(|e| ConfigError::Policy {
                    name: name.clone(),
                    reason: e.to_string(),
                })?
            };
            cfg.policies.insert(name, policy);
        }
        cfg.bindings = parsed.bindings;
        if let Some(default) = parsed.default_policy {
            cfg.default_policy = default;
        }
        cfg.strict = parsed.strict;
        if let Some(ms) = parsed.connect_timeout_ms {
            cfg.connect_timeout = Duration::from_millis(ms);
        }
        if let Some(max) = parsed.max_packet_size {
            cfg.max_packet_size = max;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Every binding and the default must name a known policy.
    pub fn check(&self) -> Result<(), ConfigError> {
        std::iter::once(&self.default_policy)
            .chain(self.bindings.values())
            .find(|name| !self.policies.contains_key(*name))
            .map_or(Ok(()), |name| Err(ConfigError::UnknownPolicy(name.clone())))
    }

    /// The policy name and document attached to `client_id`.
    pub fn policy_for(&self, client_id: &str) -> (&str, &PolicyDocument) {
        let name = self.bindings.get(client_id).unwrap_or(&self.default_policy);
        match self.policies.get(name) {
            Some(policy) => (name, policy),
            None => (DENY_ALL, &DENY_ALL_DOC),
        }
    }
}

static DENY_ALL_DOC: PolicyDocument = PolicyDocument { statements: Vec::new() };

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Action;

    #[test]
    fn parses_bindings_and_both_policy_shapes() {
        let raw = r#"{
            "policies": {
                "restricted": {"statements":[{"effect":"Allow","actions":["publish","subscribe","connect"],"topics":["home/*"]}]},
                "iam": {"Version":"2012-10-17","Statement":[{"Effect":"Allow","Action":"iot:*","Resource":"*"}]}
            },
            "bindings": {"ui": "restricted", "emulator": "iam"},
            "default_policy": "deny-all"
        }"#;
        let cfg = BrokerConfig::from_json(raw).unwrap();
        let (name, p) = cfg.policy_for("ui");
        assert_eq!(name, "restricted");
        assert!(p.allows(Action::Publish, "home/x"));
        assert!(!p.allows(Action::Publish, "away/x"));
        assert!(cfg.policy_for("emulator").1.allows(Action::Publish, "away/x"));
        let (name, p) = cfg.policy_for("stranger");
        assert_eq!(name, DENY_ALL);
        assert!(!p.allows(Action::Connect, "stranger"));
    }

    #[test]
    fn rejects_unknown_policy_names() {
        let err = BrokerConfig::from_json(r#"{"bindings":{"a":"nope"}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::UnknownPolicy(n) if n == "nope"));
        assert!(BrokerConfig::from_json(r#"{"default_policy":"nope"}"#).is_err());
        assert!(BrokerConfig::from_json(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn default_is_permissive() {
        let cfg = BrokerConfig::default();
        assert_eq!(cfg.policy_for("x").0, PERMISSIVE);
        assert!(cfg.policy_for("x").1.allows(Action::Connect, "x"));
    }
}
