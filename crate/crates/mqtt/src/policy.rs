//! Allow/deny policy documents over connect, publish and subscribe.
//!
//! Evaluation is default-deny and an explicit `Deny` always wins. A topic
//! pattern is either `*` (everything), a prefix ending in `*`, or an exact
//! string. For `connect` the resource is the client id; for `subscribe` it is
//! the filter string as sent by the client.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Effect {
    Allow,
    Deny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Connect,
    Publish,
    Subscribe,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Connect => "connect",
            Action::Publish => "publish",
            Action::Subscribe => "subscribe",
        })
    }
}

/// An action in a statement; `*` covers all three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionPattern {
    #[serde(rename = "connect")]
    Connect,
    #[serde(rename = "publish")]
    Publish,
    #[serde(rename = "subscribe")]
    Subscribe,
    #[serde(rename = "*")]
    Any,
}

impl ActionPattern {
    pub fn covers(self, action: Action) -> bool {
        matches!(
            (self, action),
            (ActionPattern::Any, _)
                | (ActionPattern::Connect, Action::Connect)
                | (ActionPattern::Publish, Action::Publish)
                | (ActionPattern::Subscribe, Action::Subscribe)
        )
    }
}

impl From<Action> for ActionPattern {
    fn from(a: Action) -> Self {
        match a {
            Action::Connect => ActionPattern::Connect,
            Action::Publish => ActionPattern::Publish,
            Action::Subscribe => ActionPattern::Subscribe,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub effect: Effect,
    pub actions: Vec<ActionPattern>,
    pub topics: Vec<String>,
}

impl Statement {
    pub fn new(effect: Effect, actions: &[Action], topics: &[&str]) -> Self {
        Statement {
            effect,
            actions: actions.iter().copied().map(ActionPattern::from).collect(),
            topics: topics.iter().map(|t| t.to_string()).collect(),
        }
    }

    fn applies(&self, action: Action, resource: &str) -> bool {
        self.actions.iter().any(|a| a.covers(action)) && self.topics.iter().any(|p| pattern_matches(p, resource))
    }
}

pub fn pattern_matches(pattern: &str, resource: &str) -> bool {
    match pattern.strip_suffix('*') {
        Some(prefix) => resource.starts_with(prefix),
        None => pattern == resource,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PolicyDocument {
    #[serde(default)]
    pub statements: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("malformed policy: {0}")]
    Malformed(String),
}

impl PolicyDocument {
    pub fn deny_all() -> Self {
        PolicyDocument::default()
    }

    /// Everything allowed, the equivalent of `iot:*` on `*`.
    pub fn permissive() -> Self {
        PolicyDocument {
            statements: vec![Statement {
                effect: Effect::Allow,
                actions: vec![ActionPattern::Any],
                topics: vec!["*".into()],
            }],
        }
    }

    /// Publish and subscribe only below `prefix`, plus connect for any client id.
    pub fn restricted(prefix: &str) -> Self {
        let under = format!("{}/*", prefix.trim_end_matches('/'));
        PolicyDocument {
            statements: vec![
                Statement::new(Effect::Allow, &[Action::Publish], &[&under]),
                Statement::new(Effect::Allow, &[Action::Subscribe], &[&under]),
                Statement::new(Effect::Allow, &[Action::Connect], &["*"]),
            ],
        }
    }

    pub fn authorize(&self, action: Action, resource: &str) -> Decision {
        let mut allowed = false;
        for statement in self.statements.iter().filter(|s| s.applies(action, resource)) {
            match statement.effect {
                Effect::Deny => return Decision::Deny,
                Effect::Allow => allowed = true,
            }
        }
        if allowed {
            Decision::Allow
        } else {
            Decision::Deny
        }
    }

    pub fn allows(&self, action: Action, resource: &str) -> bool {
        self.authorize(action, resource) == Decision::Allow
    }

    /// Reads an AWS-IAM-shaped IoT policy (`Version`/`Statement`/`Effect`/
    /// `Action`/`Resource`). `iot:Publish`, `iot:Subscribe`, `iot:Connect` and
    /// `iot:*` map onto actions; ARNs are reduced to the part after
    /// `topic/`, `topicfilter/` or `client/`. Other IoT actions are ignored.
    pub fn from_iam_json(raw: &str) -> Result<Self, PolicyError> {
        let doc: Value = serde_json::from_str(raw).map_err(|e| PolicyError::Malformed(e.to_string()))?;
        let statements = match doc.get("Statement") {
            Some(Value::Array(items)) => items.clone(),
            Some(single @ Value::Object(_)) => vec![single.clone()],
            _ => return Err(PolicyError::Malformed("missing Statement".into())),
        };
        let mut out = Vec::new();
        for st in statements {
            let effect = match st.get("Effect").and_then(Value::as_str) {
                Some("Allow") => Effect::Allow,
                Some("Deny") => Effect::Deny,
                other => return Err(PolicyError::Malformed(format!("bad Effect {other:?}"))),
            };
            let actions: Vec<ActionPattern> = string_list(st.get("Action"))?
                .iter()
                .filter_map(|a| match a.as_str() {
                    "iot:*" | "*" => Some(ActionPattern::Any),
                    "iot:Publish" => Some(ActionPattern::Publish),
                    "iot:Subscribe" => Some(ActionPattern::Subscribe),
                    "iot:Connect" => Some(ActionPattern::Connect),
                    _ => None,
                })
                .collect();
            let topics = string_list(st.get("Resource"))?
                .iter()
                .map(|r| resource_pattern(r))
                .collect();
            if !actions.is_empty() {
                out.push(Statement { effect, actions, topics });
            }
        }
        Ok(PolicyDocument { statements: out })
    }
}

fn string_list(v: Option<&Value>) -> Result<Vec<String>, PolicyError> {
    match v {
        Some(Value::String(s)) => Ok(vec![s.clone()]),
        Some(Value::Array(items)) => items
            .iter()
            .map(|i| {
                i.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| PolicyError::Malformed("expected a string".into()))
            })
            .collect(),
        _ => Err(PolicyError::Malformed("expected a string or list of strings".into())),
    }
}

fn resource_pattern(resource: &str) -> String {
    if !resource.starts_with("arn:") {
        return resource.to_owned();
    }
    // arn:aws:iot:region:account:<type>/<rest>
    let tail = resource.splitn(6, ':').nth(5).unwrap_or(resource);
    for kind in ["topicfilter/", "topic/", "client/"] {
        if let Some(rest) = tail.strip_prefix(kind) {
            return rest.to_owned();
        }
    }
    tail.to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    const PREFIX: &str = "ELL893/muneeb_majid/smarthome/mqtt";

    #[test]
    fn restricted_policy() {
        let p = PolicyDocument::restricted(PREFIX);
        assert!(p.allows(Action::Publish, &format!("{PREFIX}/smart_bulb1")));
        assert!(p.allows(Action::Subscribe, &format!("{PREFIX}/+")));
        assert!(!p.allows(Action::Publish, "other/topic"));
        assert!(!p.allows(Action::Subscribe, "other/topic"));
        assert!(!p.allows(Action::Subscribe, "#"));
        assert!(p.allows(Action::Connect, "anyone"));
    }

    #[test]
    fn default_deny_and_deny_wins() {
        let empty = PolicyDocument::deny_all();
        for a in [Action::Connect, Action::Publish, Action::Subscribe] {
            assert_eq!(empty.authorize(a, "x"), Decision::Deny);
        }
        let mut p = PolicyDocument::permissive();
        assert!(p.allows(Action::Publish, "secret/a"));
        p.statements.push(Statement::new(Effect::Deny, &[Action::Publish], &["secret/*"]));
        assert!(!p.allows(Action::Publish, "secret/a"));
        assert!(p.allows(Action::Subscribe, "secret/a"));
        assert!(p.allows(Action::Publish, "public/a"));
    }

    #[test]
    fn patterns() {
        assert!(pattern_matches("*", ""));
        assert!(pattern_matches("a/*", "a/"));
        assert!(pattern_matches("a/*", "a/b/c"));
        assert!(!pattern_matches("a/*", "a"));
        assert!(pattern_matches("a/b", "a/b"));
        assert!(!pattern_matches("a/b", "a/bc"));
    }

    #[test]
    fn json_shape() {
        let raw = r#"{"statements":[{"effect":"Allow","actions":["publish","*"],"topics":["ELL893/*"]}]}"#;
        let p: PolicyDocument = serde_json::from_str(raw).unwrap();
        assert_eq!(p.statements[0].actions, vec![ActionPattern::Publish, ActionPattern::Any]);
        assert_eq!(serde_json::to_string(&p).unwrap(), raw);
    }

    #[test]
    fn iam_documents() {
        let permissive = r#"{"Version":"2012-10-17","Statement":[{"Effect":"Allow","Action":["iot:*"],"Resource":"*"}]}"#;
        let p = PolicyDocument::from_iam_json(permissive).unwrap();
        assert!(p.allows(Action::Connect, "c"));
        assert!(p.allows(Action::Publish, "any/topic"));

        let restricted = r#"{
          "Version": "2012-10-17",
          "Statement": [
            {"Effect": "Allow", "Action": ["iot:Publish"],
             "Resource": ["arn:aws:iot:us-west-2:974628150977:topic/ELL893/muneeb_majid/smarthome/mqtt/*"]},
            {"Effect": "Allow", "Action": ["iot:Subscribe"],
             "Resource": ["arn:aws:iot:us-west-2:974628150977:topicfilter/ELL893/muneeb_majid/smarthome/mqtt/*"]}
          ]
        }"#;
        let p = PolicyDocument::from_iam_json(restricted).unwrap();
        assert!(p.allows(Action::Publish, &format!("{PREFIX}/smart_ac1")));
        assert!(p.allows(Action::Subscribe, &format!("{PREFIX}/smart_ac1")));
        assert!(!p.allows(Action::Publish, "other/topic"));
        assert!(!p.allows(Action::Subscribe, &format!("{PREFIX}/smart_ac1").replace("mqtt", "http")));
        assert!(!p.allows(Action::Connect, "c"));
        assert!(PolicyDocument::from_iam_json("{}").is_err());
    }
}
