//! JSON bodies exchanged with the web widget and platform adapters.

use chrono::{DateTime, Utc};
use crisisbot::dialogue::{Channel, Reply, ReplyKind};
use serde::{Deserialize, Serialize};

pub const MAX_TEXT_CHARS: usize = 2000;
pub const MAX_SESSION_ID_LEN: usize = 64;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WireError {
    #[error("malformed body: {0}")]
    Malformed(String),
    #[error("session_id must be 1-64 characters from [A-Za-z0-9-]")]
    BadSessionId,
    #[error("unknown channel \"{0}\"")]
    BadChannel(String),
    #[error("timestamp is not RFC 3339: {0}")]
    BadTimestamp(String),
    #[error("text has {0} characters; the limit is {MAX_TEXT_CHARS}")]
    TooLong(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireMessage {
    pub session_id: String,
    pub text: String,
    pub channel: String,
    /// Client clock, informational. Turns are stamped on arrival.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

pub fn valid_session_id(id: &str) -> bool {
    (1..=MAX_SESSION_ID_LEN).contains(&id.len()) && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

impl WireMessage {
    pub fn parse(body: &[u8]) -> Result<Self, WireError> {
        serde_json::from_slice(body).map_err(|e| WireError::Malformed(e.to_string()))
    }

    /// Checks the invariants and returns the parsed channel.
    pub fn validate(&self) -> Result<Channel, WireError> {
        if !valid_session_id(&self.session_id) {
            return Err(WireError::BadSessionId);
        }
        let channel = Channel::parse(&self.channel).ok_or_else(|| WireError::BadChannel(self.channel.clone()))?;
        if let Some(ts) = &self.timestamp {
            DateTime::parse_from_rfc3339(ts).map_err(|_| WireError::BadTimestamp(ts.clone()))?;
        }
        let n = self.text.chars().count();
        if n > MAX_TEXT_CHARS {
            return Err(WireError::TooLong(n));
        }
        Ok(channel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireReply {
    pub session_id: String,
    pub kind: ReplyKind,
    pub text: String,
    pub intent_id: Option<String>,
    pub confidence: f64,
    pub language_group: String,
    pub timestamp: String,
}

impl WireReply {
    pub fn from_reply(session_id: &str, reply: Reply, at: DateTime<Utc>) -> Self {
        Self {
            session_id: session_id.to_string(),
            kind: reply.kind,
            text: reply.text,
            intent_id: reply.intent_id,
            confidence: reply.confidence,
            language_group: reply.language_group,
            timestamp: crisisbot::datastore::rfc3339(at),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn msg(id: &str, text: &str) -> WireMessage {
        WireMessage { session_id: id.into(), text: text.into(), channel: "web".into(), timestamp: None }
    }

    #[test]
    fn validation() {
        assert_eq!(msg("s1", "hi").validate(), Ok(Channel::Web));
        assert_eq!(msg("", "hi").validate(), Err(WireError::BadSessionId));
        assert_eq!(msg("a_b", "hi").validate(), Err(WireError::BadSessionId));
        assert_eq!(msg(&"a".repeat(65), "hi").validate(), Err(WireError::BadSessionId));
        assert_eq!(msg("s", &"é".repeat(2000)).validate(), Ok(Channel::Web));
        assert_eq!(msg("s", &"é".repeat(2001)).validate(), Err(WireError::TooLong(2001)));
        let mut m = msg("s", "x");
        m.channel = "fax".into();
        assert!(matches!(m.validate(), Err(WireError::BadChannel(_))));
        m.channel = "cli".into();
        m.timestamp = Some("yesterday".into());
        assert!(matches!(m.validate(), Err(WireError::BadTimestamp(_))));
        m.timestamp = Some("2020-03-23T10:00:00Z".into());
        assert_eq!(m.validate(), Ok(Channel::Cli));
    }

    #[test]
    fn parse_rejects_garbage_and_unknown_fields() {
        assert!(WireMessage::parse(b"{").is_err());
        assert!(WireMessage::parse(b"[]").is_err());
        assert!(WireMessage::parse(br#"{"session_id":"s","text":"x"}"#).is_err());
        assert!(WireMessage::parse(br#"{"session_id":"s","text":"x","channel":"web","extra":1}"#).is_err());
        let m = WireMessage::parse(r#"{"session_id":"s1","text":"how r u","channel":"web"}"#.as_bytes()).unwrap();
        assert_eq!(m, msg("s1", "how r u"));
    }

    proptest! {
        #[test]
        fn round_trip(
            id in "[A-Za-z0-9-]{1,64}",
            text in "\\PC{0,200}",
            channel in prop::sample::select(vec!["web", "messenger_sim", "cli"]),
            ts in prop::option::of(Just("2020-03-23T08:15:00.5+01:00".to_string())),
        ) {
            let m = WireMessage { session_id: id, text, channel: channel.into(), timestamp: ts };
            prop_assert!(m.validate().is_ok());
            let again = WireMessage::parse(serde_json::to_string(&m).unwrap().as_bytes()).unwrap();
            prop_assert_eq!(again, m);
        }
    }
}
