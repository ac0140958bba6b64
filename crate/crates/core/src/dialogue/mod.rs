//! Threshold-gated answering.
//!
//! A message is classified; if the top confidence reaches the calibrated
//! threshold the matched intent's answer is returned (or fetched from its
//! external service). Otherwise the fallback message of the best-guess
//! language group is returned and the question goes to the unanswered log.

pub mod connector;
pub mod stub;

use std::fmt;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use connector::{
    invoke_external, ConnectorError, ExternalBinding, ExternalConnector, HttpConnector, RegistryError, ServiceRegistry,
};

use crate::classifier::predict;
use crate::corpus::IntentCatalog;
use crate::embednet::EmbeddingModel;

/// Language group used for fallbacks when no ranking is available.
pub const DEFAULT_FALLBACK_GROUP: &str = "english";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Web,
    MessengerSim,
    Cli,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Web => "web",
            Channel::MessengerSim => "messenger_sim",
            Channel::Cli => "cli",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "web" => Some(Channel::Web),
            "messenger_sim" => Some(Channel::MessengerSim),
            "cli" => Some(Channel::Cli),
            _ => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub channel: Channel,
    pub started_at: DateTime<Utc>,
    pub last_active: DateTime<Utc>,
    pub turn_count: u64,
}

impl Session {
    pub fn new(session_id: impl Into<String>, channel: Channel, now: DateTime<Utc>) -> Self {
        Self { session_id: session_id.into(), channel, started_at: now, last_active: now, turn_count: 0 }
    }

    fn touch(&mut self, now: DateTime<Utc>) {
        self.turn_count += 1;
        self.last_active = self.last_active.max(now);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplyKind {
    Answer,
    External,
    Fallback,
}

impl ReplyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReplyKind::Answer => "answer",
            ReplyKind::External => "external",
            ReplyKind::Fallback => "fallback",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "answer" => Some(ReplyKind::Answer),
            "external" => Some(ReplyKind::External),
            "fallback" => Some(ReplyKind::Fallback),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub kind: ReplyKind,
    pub text: String,
    /// Matched intent; for fallbacks, the best (sub-threshold) guess if any.
    pub intent_id: Option<String>,
    pub confidence: f64,
    pub language_group: String,
}

#[derive(Debug, thiserror::Error)]
pub enum DialogueError {
    #[error("unknown intent \"{0}\"")]
    UnknownIntent(String),
    #[error("no fallback message for language group \"{0}\"")]
    MissingFallback(String),
    #[error("engine configuration invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("threshold must be a finite number, got {0}")]
    BadThreshold(f64),
}

/// Receives questions that fell below the threshold.
pub trait UnansweredSink: Send + Sync {
    fn append_unanswered(&self, text: &str, timestamp: DateTime<Utc>, channel: Channel) -> std::io::Result<()>;
}

/// In-memory sink, handy for tests and the interactive chat loop.
#[derive(Debug, Default)]
pub struct MemorySink {
    entries: Mutex<Vec<(DateTime<Utc>, Channel, String)>>,
}

impl MemorySink {
    pub fn entries(&self) -> Vec<(DateTime<Utc>, Channel, String)> {
        self.entries.lock().unwrap().clone()
    }
}

impl UnansweredSink for MemorySink {
    fn append_unanswered(&self, text: &str, timestamp: DateTime<Utc>, channel: Channel) -> std::io::Result<()> {
        self.entries.lock().unwrap().push((timestamp, channel, text.to_string()));
        Ok(())
    }
}

/// The entry's answer and the language group it is written for.
pub fn select_answer<'c>(catalog: &'c IntentCatalog, intent_id: &str) -> Result<(&'c str, &'c str), DialogueError> {
    let entry = catalog.intent(intent_id).ok_or_else(|| DialogueError::UnknownIntent(intent_id.to_string()))?;
    Ok((&entry.answer, &entry.language_group))
}

pub fn fallback_reply<'c>(catalog: &'c IntentCatalog, language_group: &str) -> Result<&'c str, DialogueError> {
    catalog.fallback(language_group).ok_or_else(|| DialogueError::MissingFallback(language_group.to_string()))
}

/// Immutable, shareable engine state.
pub struct Engine {
    model: EmbeddingModel,
    threshold: f64,
    catalog: IntentCatalog,
    registry: ServiceRegistry,
    connector: Box<dyn ExternalConnector>,
    unanswered: Arc<dyn UnansweredSink>,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("threshold", &self.threshold)
            .field("intents", &self.catalog.intents.len())
            .field("services", &self.registry.len())
            .finish_non_exhaustive()
    }
}

impl Engine {
    /// Checks that every model label has a catalog entry and every
    /// `external_service` key is registered.
    pub fn new(
        model: EmbeddingModel,
        threshold: f64,
        catalog: IntentCatalog,
        registry: ServiceRegistry,
        unanswered: Arc<dyn UnansweredSink>,
    ) -> Result<Self, DialogueError> {
        if !threshold.is_finite() {
            return Err(DialogueError::BadThreshold(threshold));
        }
        let mut problems = Vec::new();
        for tag in model.vocab.tags() {
            if catalog.intent(tag).is_none() {
                problems.push(format!("model intent \"{tag}\" is missing from the catalog"));
            }
        }
        for e in &catalog.intents {
            if let Some(key) = &e.external_service {
                if !registry.contains(key) {
                    problems.push(format!("intent \"{}\" uses unregistered service \"{key}\"", e.intent_id));
                }
            }
        }
        if !problems.is_empty() {
            return Err(DialogueError::Config(problems));
        }
        Ok(Self { model, threshold, catalog, registry, connector: Box::new(HttpConnector), unanswered })
    }

    pub fn with_connector(mut self, connector: Box<dyn ExternalConnector>) -> Self {
        self.connector = connector;
        self
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn model(&self) -> &EmbeddingModel {
        &self.model
    }

    pub fn catalog(&self) -> &IntentCatalog {
        &self.catalog
    }

    fn default_group(&self) -> &str {
        if self.catalog.fallback(DEFAULT_FALLBACK_GROUP).is_some() {
            DEFAULT_FALLBACK_GROUP
        } else {
            self.catalog.fallbacks.keys().next().map(String::as_str).unwrap_or(DEFAULT_FALLBACK_GROUP)
        }
    }

    /// Never fails: internal errors degrade to a fallback reply.
    pub fn handle_message(&self, session: &mut Session, text: &str, now: DateTime<Utc>) -> Reply {
        session.touch(now);
        let prediction = match predict(&self.model, text) {
            Ok(p) => Some(p),
            Err(e) => {
                log::error!("prediction failed for session {}: {e}", session.session_id);
                None
            }
        };
        let top = prediction.as_ref().and_then(|p| p.ranked.first()).map(|(id, c)| (id.clone(), *c));

        if let Some((intent_id, confidence)) = &top {
            if *confidence >= self.threshold {
                if let Some(reply) = self.answer(intent_id, *confidence) {
                    return reply;
                }
            }
        }

        let (intent_id, confidence) = match top {
            Some((id, c)) => (Some(id), c),
            None => (None, f64::NAN),
        };
        let group = intent_id
            .as_deref()
            .and_then(|id| self.catalog.intent(id))
            .map(|e| e.language_group.as_str())
            .unwrap_or_else(|| self.default_group())
            .to_string();
        let fallback = fallback_reply(&self.catalog, &group).unwrap_or_default().to_string();
        if let Err(e) = self.unanswered.append_unanswered(text, now, session.channel) {
            log::error!("cannot log unanswered question: {e}");
        }
        Reply {
            kind: ReplyKind::Fallback,
            text: fallback,
            intent_id,
            confidence: if confidence.is_finite() { confidence } else { -1.0 },
            language_group: group,
        }
    }

    fn answer(&self, intent_id: &str, confidence: f64) -> Option<Reply> {
        let entry = match self.catalog.intent(intent_id) {
            Some(e) => e,
            None => {
                log::error!("predicted intent \"{intent_id}\" missing from catalog");
                return None;
            }
        };
        let group = entry.language_group.clone();
        let (kind, text) = match entry.external_service.as_deref().and_then(|k| self.registry.get(k)) {
            Some(binding) => {
                let default = fallback_reply(&self.catalog, &group).unwrap_or_default();
                let (text, _) = invoke_external(self.connector.as_ref(), binding, intent_id, &group, default);
                (ReplyKind::External, text)
            }
            None => (ReplyKind::Answer, entry.answer.clone()),
        };
        Some(Reply { kind, text, intent_id: Some(intent_id.to_string()), confidence, language_group: group })
    }
}
