//! Messaging-platform webhook format and outbound adapters.
//!
//! Webhook body (`POST /v1/webhook/{platform}`):
//!
//! ```json
//! {"type": "message", "sender_id": "u-123", "text": "Bawo ni?", "token": "<secret>"}
//! ```
//!
//! Events whose `type` is not `message` are acknowledged and skipped. The
//! session id is `<platform>-<first 16 hex digits of sha256(sender_id)>`.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MESSAGE_EVENT: &str = "message";
pub const SIMULATOR_PLATFORM: &str = "messenger_sim";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformEvent {
    #[serde(rename = "type")]
    pub kind: String,
    pub sender_id: String,
    #[serde(default)]
    pub text: String,
    pub token: String,
}

/// Stable session id for a platform sender, valid under the wire rules.
pub fn session_id_for(platform: &str, sender_id: &str) -> String {
    let slug: String = platform
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .take(40)
        .collect();
    let digest = Sha256::digest(sender_id.as_bytes());
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("{slug}-{hex}")
}

/// Token comparison that does not stop at the first differing byte.
pub fn token_matches(given: &str, expected: &str) -> bool {
    let (a, b) = (given.as_bytes(), expected.as_bytes());
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[derive(Debug, thiserror::Error)]
#[error("delivery to {recipient} failed: {message}")]
pub struct DeliveryError {
    pub recipient: String,
    pub message: String,
}

/// Sends bot replies back to a platform user.
pub trait PlatformAdapter: Send + Sync {
    fn deliver(&self, sender_id: &str, text: &str) -> Result<(), DeliveryError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub sender_id: String,
    pub text: String,
}

/// In-process stand-in for a messenger platform: collects deliveries.
#[derive(Debug, Default)]
pub struct MessengerSimulator {
    outbox: Mutex<Vec<Delivery>>,
}

impl MessengerSimulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn outbox(&self) -> Vec<Delivery> {
        self.outbox.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Webhook body for a user message.
    pub fn message_event(sender_id: &str, text: &str, token: &str) -> PlatformEvent {
        PlatformEvent { kind: MESSAGE_EVENT.into(), sender_id: sender_id.into(), text: text.into(), token: token.into() }
    }
}

impl PlatformAdapter for MessengerSimulator {
    fn deliver(&self, sender_id: &str, text: &str) -> Result<(), DeliveryError> {
        self.outbox
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(Delivery { sender_id: sender_id.into(), text: text.into() });
        Ok(())
    }
}
