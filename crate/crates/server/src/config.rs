//! Gateway settings: YAML file, then environment variables on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

pub const ENV_ADDR: &str = "BOT_ADDR";
pub const ENV_MODEL: &str = "BOT_MODEL";
pub const ENV_CATALOG: &str = "BOT_CATALOG";
pub const ENV_WEBHOOK_SECRET: &str = "BOT_WEBHOOK_SECRET";
pub const ENV_DATA_DIR: &str = "BOT_DATA_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("missing setting: {0}")]
    Missing(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub addr: String,
    pub model: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    /// External-service registry (YAML with a `services` list).
    pub services: Option<PathBuf>,
    pub webhook_secret: Option<String>,
    /// Holds the conversation database and the unanswered-questions file.
    pub data_dir: PathBuf,
    /// Takes precedence over `calibration`.
    pub threshold: Option<f64>,
    /// Calibration report to read the threshold from. With neither this nor
    /// `threshold`, the gateway recalibrates from the catalog at startup.
    pub calibration: Option<PathBuf>,
    /// Directory served at `/` (the chat widget).
    pub static_dir: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            addr: DEFAULT_ADDR.into(),
            model: None,
            catalog: None,
            services: None,
            webhook_secret: None,
            data_dir: PathBuf::from("bot-data"),
            threshold: None,
            calibration: None,
            static_dir: None,
        }
    }
}

impl GatewayConfig {
    pub fn from_yaml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        serde_yaml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.into(), message: e.to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_yaml_str(&text, &path.display().to_string())
    }

    /// Overrides fields from `BOT_*` variables found through `lookup`.
    pub fn apply_env_with(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(v) = lookup(ENV_ADDR) {
            self.addr = v;
        }
        if let Some(v) = lookup(ENV_MODEL) {
            self.model = Some(v.into());
        }
        if let Some(v) = lookup(ENV_CATALOG) {
            self.catalog = Some(v.into());
        }
        if let Some(v) = lookup(ENV_WEBHOOK_SECRET) {
            self.webhook_secret = Some(v);
        }
        if let Some(v) = lookup(ENV_DATA_DIR) {
            self.data_dir = v.into();
        }
    }

    pub fn apply_env(&mut self) {
        self.apply_env_with(|k| std::env::var(k).ok().filter(|v| !v.is_empty()));
    }

    pub fn model_path(&self) -> Result<&Path, ConfigError> {
        self.model.as_deref().ok_or(ConfigError::Missing("model path (BOT_MODEL)"))
    }

    pub fn catalog_path(&self) -> Result<&Path, ConfigError> {
        self.catalog.as_deref().ok_or(ConfigError::Missing("catalog path (BOT_CATALOG)"))
    }
}
