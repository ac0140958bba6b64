//! Conversation store, unanswered-question log, usage analytics.
//!
//! `<data dir>/conversations.sqlite3` schema (version 1):
//!
//! ```sql
//! meta(key TEXT PRIMARY KEY, value TEXT)                    -- schema_version
//! conversations(session_id TEXT PRIMARY KEY, channel TEXT,
//!               started_at_us INTEGER, last_active_us INTEGER)
//! turns(id INTEGER PRIMARY KEY AUTOINCREMENT, session_id TEXT,
//!       ts_us INTEGER, ts TEXT,            -- UTC micros since epoch, RFC 3339
//!       user_text TEXT, reply_kind TEXT, intent_id TEXT NULL, confidence REAL)
//! ```
//!
//! `<data dir>/unanswered.tsv` holds one `timestamp<TAB>channel<TAB>text` line
//! per fallback, with tabs and newlines in the text escaped.
//!
//! "Users" are counted as distinct session ids; there is no identity system.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Duration, NaiveDate, SecondsFormat, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};

use crate::dialogue::{Channel, ReplyKind, UnansweredSink};
use crate::text::escape_field;

pub const DB_FILE: &str = "conversations.sqlite3";
pub const UNANSWERED_FILE: &str = "unanswered.tsv";
pub const SCHEMA_VERSION: i64 = 1;
/// Days in the MAU window, ending on (and including) the DAU day.
pub const MONTH_WINDOW_DAYS: i64 = 30;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("database: {0}")]
    Db(#[from] rusqlite::Error),
    #[error("invalid range: {from} is not before {to}")]
    InvalidRange { from: DateTime<Utc>, to: DateTime<Utc> },
    #[error("unsupported store schema version {0}")]
    Schema(i64),
    #[error("corrupt row: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub timestamp: DateTime<Utc>,
    pub user_text: String,
    pub reply_kind: ReplyKind,
    pub intent_id: Option<String>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub session_id: String,
    pub channel: Channel,
    /// Ordered by timestamp, then insertion.
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageStats {
    pub unique_users: u64,
    pub total_questions: u64,
    pub min_q_per_conv: u64,
    pub max_q_per_conv: u64,
    pub avg_q_per_conv: f64,
    pub daily_active: u64,
    pub monthly_active: u64,
    pub stickiness: f64,
}

fn micros(ts: DateTime<Utc>) -> i64 {
    ts.timestamp_micros()
}

fn from_micros(us: i64) -> Result<DateTime<Utc>, StoreError> {
    Utc.timestamp_micros(us).single().ok_or_else(|| StoreError::Corrupt(format!("timestamp {us}")))
}

fn day_start(day: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&day.and_hms_opt(0, 0, 0).expect("midnight exists"))
}

pub fn rfc3339(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Micros, true)
}

/// Single-file conversation store. One connection behind a mutex serializes writers.
pub struct Store {
    conn: Mutex<Connection>,
    path: PathBuf,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("path", &self.path).finish()
    }
}

impl Store {
    /// Opens (creating if needed) the store inside `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir.as_ref())?;
        let path = dir.as_ref().join(DB_FILE);
        let conn = Connection::open(&path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "NORMAL")?;
        conn.execute_batch(
            "CREATE TABLE IF NOT EXISTS meta(key TEXT PRIMARY KEY, value TEXT NOT NULL);
             CREATE TABLE IF NOT EXISTS conversations(
                 session_id TEXT PRIMARY KEY,
                 channel TEXT NOT NULL,
                 started_at_us INTEGER NOT NULL,
                 last_active_us INTEGER NOT NULL);
             CREATE TABLE IF NOT EXISTS turns(
                 id INTEGER PRIMARY KEY AUTOINCREMENT,
                 session_id TEXT NOT NULL REFERENCES conversations(session_id),
                 ts_us INTEGER NOT NULL,
                 ts TEXT NOT NULL,
                 user_text TEXT NOT NULL,
                 reply_kind TEXT NOT NULL,
                 intent_id TEXT,
                 confidence REAL NOT NULL);
             CREATE INDEX IF NOT EXISTS turns_by_session ON turns(session_id, ts_us);
             CREATE INDEX IF NOT EXISTS turns_by_time ON turns(ts_us);",
        )?;
        let version: Option<String> =
            conn.query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0)).optional()?;
        match version {
            None => {
                conn.execute("INSERT INTO meta(key, value) VALUES ('schema_version', ?1)", [SCHEMA_VERSION.to_string()])?;
            }
            Some(v) => {
                let v: i64 = v.parse().map_err(|_| StoreError::Corrupt(format!("schema_version {v}")))?;
                if v != SCHEMA_VERSION {
                    return Err(StoreError::Schema(v));
                }
            }
        }
        Ok(Self { conn: Mutex::new(conn), path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record_turn(&self, session_id: &str, channel: Channel, turn: &Turn) -> Result<(), StoreError> {
        self.record_batch(std::iter::once((session_id, channel, turn)))
    }

    /// Appends many turns in one transaction.
    pub fn record_batch<'a>(
        &self,
        turns: impl IntoIterator<Item = (&'a str, Channel, &'a Turn)>,
    ) -> Result<(), StoreError> {
        let mut conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        let tx = conn.transaction()?;
        {
            let mut upsert = tx.prepare_cached(
                "INSERT INTO conversations(session_id, channel, started_at_us, last_active_us) VALUES (?1, ?2, ?3, ?3)
                 ON CONFLICT(session_id) DO UPDATE SET
                     started_at_us = MIN(started_at_us, excluded.started_at_us),
                     last_active_us = MAX(last_active_us, excluded.last_active_us)",
            )?;
            let mut insert = tx.prepare_cached(
                "INSERT INTO turns(session_id, ts_us, ts, user_text, reply_kind, intent_id, confidence)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
            )?;
            for (session_id, channel, turn) in turns {
                let us = micros(turn.timestamp);
                upsert.execute(params![session_id, channel.as_str(), us])?;
                insert.execute(params![
                    session_id,
                    us,
                    rfc3339(turn.timestamp),
                    turn.user_text,
                    turn.reply_kind.as_str(),
                    turn.intent_id,
                    turn.confidence
                ])?;
            }
        }
        tx.commit()?;
        Ok(())
    }

    pub fn conversation(&self, session_id: &str) -> Result<Option<ConversationRecord>, StoreError> {
        let conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        let channel: Option<String> = conn
            .query_row("SELECT channel FROM conversations WHERE session_id = ?1", [session_id], |r| r.get(0))
            .optional()?;
        let Some(channel) = channel else { return Ok(None) };
        let channel = Channel::parse(&channel).ok_or_else(|| StoreError::Corrupt(format!("channel {channel}")))?;
        let mut stmt = conn.prepare_cached(
            "SELECT ts_us, user_text, reply_kind, intent_id, confidence FROM turns
             WHERE session_id = ?1 ORDER BY ts_us, id",
        )?;
        let rows = stmt.query_map([session_id], |r| {
            Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?, r.get::<_, Option<String>>(3)?, r.get::<_, f64>(4)?))
        })?;
        let mut turns = Vec::new();
        for row in rows {
            let (us, user_text, kind, intent_id, confidence) = row?;
            turns.push(Turn {
                timestamp: from_micros(us)?,
                user_text,
                reply_kind: ReplyKind::parse(&kind).ok_or_else(|| StoreError::Corrupt(format!("reply kind {kind}")))?,
                intent_id,
                confidence,
            });
        }
        Ok(Some(ConversationRecord { session_id: session_id.to_string(), channel, turns }))
    }

    pub fn session_ids(&self) -> Result<Vec<String>, StoreError> {
        let conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        let mut stmt = conn.prepare_cached("SELECT session_id FROM conversations ORDER BY session_id")?;
        let ids = stmt.query_map([], |r| r.get(0))?.collect::<Result<Vec<String>, _>>()?;
        Ok(ids)
    }

    pub fn turn_count(&self) -> Result<u64, StoreError> {
        let conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        let n: i64 = conn.query_row("SELECT COUNT(*) FROM turns", [], |r| r.get(0))?;
        Ok(n as u64)
    }

    fn active_sessions(conn: &Connection, from: DateTime<Utc>, to: DateTime<Utc>) -> Result<u64, StoreError> {
        let n: i64 = conn.query_row(
            "SELECT COUNT(DISTINCT session_id) FROM turns WHERE ts_us >= ?1 AND ts_us < ?2",
            params![micros(from), micros(to)],
            |r| r.get(0),
        )?;
        Ok(n as u64)
    }

    /// Conversation statistics over turns in `[from, to)` and DAU/MAU stickiness
    /// for `day` against the 30-day window ending on `day`.
    ///
    /// A conversation counts when it has at least one turn inside the range.
    pub fn usage_stats(&self, from: DateTime<Utc>, to: DateTime<Utc>, day: NaiveDate) -> Result<UsageStats, StoreError> {
        if from >= to {
            return Err(StoreError::InvalidRange { from, to });
        }
        let conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        let mut stmt = conn.prepare_cached(
            "SELECT COUNT(*) FROM turns WHERE ts_us >= ?1 AND ts_us < ?2 GROUP BY session_id",
        )?;
        let counts = stmt
            .query_map(params![micros(from), micros(to)], |r| r.get::<_, i64>(0))?
            .collect::<Result<Vec<i64>, _>>()?;

        let unique_users = counts.len() as u64;
        let total_questions: u64 = counts.iter().map(|&c| c as u64).sum();
        let min_q_per_conv = counts.iter().copied().min().unwrap_or(0) as u64;
        let max_q_per_conv = counts.iter().copied().max().unwrap_or(0) as u64;
        let avg_q_per_conv = if unique_users == 0 { 0.0 } else { total_questions as f64 / unique_users as f64 };

        let day_end = day_start(day) + Duration::days(1);
        let daily_active = Self::active_sessions(&conn, day_start(day), day_end)?;
        let monthly_active = Self::active_sessions(&conn, day_end - Duration::days(MONTH_WINDOW_DAYS), day_end)?;
        Ok(UsageStats {
            unique_users,
            total_questions,
            min_q_per_conv,
            max_q_per_conv,
            avg_q_per_conv,
            daily_active,
            monthly_active,
            stickiness: stickiness(daily_active, monthly_active),
        })
    }

    /// Up to `n` conversations with at least `min_turns` turns, drawn with a fixed seed.
    pub fn sample_conversations(&self, n: usize, min_turns: usize, seed: u64) -> Result<Vec<ConversationRecord>, StoreError> {
        let eligible: Vec<String> = {
            let conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
            let mut stmt = conn.prepare_cached(
                "SELECT session_id FROM turns GROUP BY session_id HAVING COUNT(*) >= ?1 ORDER BY session_id",
            )?;
            let ids = stmt.query_map([min_turns as i64], |r| r.get(0))?.collect::<Result<Vec<String>, _>>()?;
            ids
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chosen: Vec<&String> = eligible.choose_multiple(&mut rng, n.min(eligible.len())).collect();
        let mut out = Vec::with_capacity(chosen.len());
        for id in chosen {
            if let Some(c) = self.conversation(id)? {
                out.push(c);
            }
        }
        Ok(out)
    }
}

/// DAU / MAU, 0 when there are no monthly actives.
pub fn stickiness(daily_active: u64, monthly_active: u64) -> f64 {
    if monthly_active == 0 {
        0.0
    } else {
        daily_active as f64 / monthly_active as f64
    }
}

/// Append-only log of unanswered questions.
#[derive(Debug)]
pub struct UnansweredLog {
    path: PathBuf,
    lock: Mutex<()>,
}

impl UnansweredLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into(), lock: Mutex::new(()) }
    }

    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        Self::new(dir.as_ref().join(UNANSWERED_FILE))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, text: &str, timestamp: DateTime<Utc>, channel: Channel) -> std::io::Result<()> {
        let line = format!("{}\t{}\t{}\n", rfc3339(timestamp), channel.as_str(), escape_field(text));
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(line.as_bytes())?;
        f.flush()
    }

    /// Raw lines, oldest first. Missing file reads as empty.
    pub fn lines(&self) -> std::io::Result<Vec<String>> {
        match std::fs::read_to_string(&self.path) {
            Ok(s) => Ok(s.lines().map(str::to_string).collect()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e),
        }
    }
}

impl UnansweredSink for UnansweredLog {
    fn append_unanswered(&self, text: &str, timestamp: DateTime<Utc>, channel: Channel) -> std::io::Result<()> {
        self.append(text, timestamp, channel)
    }
}
