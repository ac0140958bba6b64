//! External-service connector.
//!
//! Wire contract: `GET {endpoint}?intent=<intent id>&lang=<language group>`,
//! answered with a JSON object carrying a string field `text`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const DEFAULT_TIMEOUT_MS: u64 = 3000;

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalBinding {
    pub key: String,
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Reply used when the service fails, per language group.
    #[serde(default)]
    pub fallback_text: BTreeMap<String, String>,
}

impl ExternalBinding {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("cannot read services file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("services file parse error: {0}")]
    Parse(String),
    #[error("invalid service registry:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceRegistry {
    #[serde(default)]
    services: Vec<ExternalBinding>,
}

impl ServiceRegistry {
    pub fn new(services: Vec<ExternalBinding>) -> Result<Self, RegistryError> {
        let reg = Self { services };
        reg.validate()?;
        Ok(reg)
    }

    /// Parses a YAML document with a top-level `services` list.
    pub fn from_yaml_str(text: &str) -> Result<Self, RegistryError> {
        let reg: Self = serde_yaml::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| RegistryError::Io { path: path.display().to_string(), source })?;
        Self::from_yaml_str(&text)
    }

    fn validate(&self) -> Result<(), RegistryError> {
        let mut problems = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for b in &self.services {
            if !seen.insert(b.key.as_str()) {
                problems.push(format!("duplicate service key \"{}\"", b.key));
            }
            if b.timeout_ms == 0 {
                problems.push(format!("service \"{}\" has a zero timeout", b.key));
            }
            if !(b.endpoint.starts_with("http://") || b.endpoint.starts_with("https://")) {
                problems.push(format!("service \"{}\" endpoint must be an http(s) URL", b.key));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(RegistryError::Invalid(problems))
        }
    }

    pub fn get(&self, key: &str) -> Option<&ExternalBinding> {
        self.services.iter().find(|b| b.key == key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConnectorError {
    #[error("request failed: {0}")]
    Transport(String),
    #[error("service answered with status {0}")]
    Status(u16),
    #[error("malformed response body: {0}")]
    Body(String),
}

pub trait ExternalConnector: Send + Sync {
    fn fetch(&self, binding: &ExternalBinding, intent_id: &str, language_group: &str) -> Result<String, ConnectorError>;
}

#[derive(Deserialize)]
struct ServiceBody {
    text: String,
}

/// Blocking HTTP connector; one agent per call so each binding's timeout applies.
#[derive(Debug, Clone, Default)]
pub struct HttpConnector;

impl ExternalConnector for HttpConnector {
    fn fetch(&self, binding: &ExternalBinding, intent_id: &str, language_group: &str) -> Result<String, ConnectorError> {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(binding.timeout())).build().into();
        let mut resp = agent
            .get(&binding.endpoint)
            .query("intent", intent_id)
            .query("lang", language_group)
            .call()
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) => ConnectorError::Status(code),
                other => ConnectorError::Transport(other.to_string()),
            })?;
        let raw = resp.body_mut().read_to_string().map_err(|e| ConnectorError::Body(e.to_string()))?;
        let body: ServiceBody = serde_json::from_str(&raw).map_err(|e| ConnectorError::Body(e.to_string()))?;
        Ok(body.text)
    }
}

/// Calls the service; any failure yields the binding's fallback text for the group.
pub fn invoke_external(
    connector: &dyn ExternalConnector,
    binding: &ExternalBinding,
    intent_id: &str,
    language_group: &str,
    default_text: &str,
) -> (String, bool) {
    match connector.fetch(binding, intent_id, language_group) {
        Ok(text) => (text, true),
        Err(e) => {
            log::warn!("external service \"{}\" failed for {intent_id}: {e}", binding.key);
            let text = binding.fallback_text.get(language_group).map(String::as_str).unwrap_or(default_text);
            (text.to_string(), false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_from_yaml() {
        let reg = ServiceRegistry::from_yaml_str(
            "services:\n  - key: cases\n    endpoint: http://127.0.0.1:1/cases\n    fallback_text:\n      english: unavailable\n",
        )
        .unwrap();
        let b = reg.get("cases").unwrap();
        assert_eq!(b.timeout(), Duration::from_secs(3));
        assert_eq!(b.fallback_text["english"], "unavailable");
    }

    #[test]
    fn registry_rejects_duplicates_and_zero_timeout() {
        let b = ExternalBinding {
            key: "k".into(),
            endpoint: "http://x".into(),
            timeout_ms: 0,
            fallback_text: BTreeMap::new(),
        };
        match ServiceRegistry::new(vec![b.clone(), b]) {
            Err(RegistryError::Invalid(p)) => assert_eq!(p.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
