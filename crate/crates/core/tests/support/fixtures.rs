//! Constructed evaluation and analytics fixtures.

#![allow(dead_code)]

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use crisisbot::datastore::{Store, Turn, UsageStats};
use crisisbot::dialogue::{Channel, ReplyKind};
use crisisbot::evalkit::Judgment;

pub const SSA_RESPONSES: usize = 2000;
pub const SSA_JUDGES: usize = 3;

/// 2000 responses × 3 judges. Majority sensible on 1360 responses (68%),
/// majority specific on 1200 (60%). Every response carries one dissenting
/// judge so the majority rule, not unanimity, decides.
pub fn ssa_judgments() -> Vec<Judgment> {
    let mut out = Vec::with_capacity(SSA_RESPONSES * SSA_JUDGES);
    for r in 0..SSA_RESPONSES {
        let conv = format!("conv{:04}", r / 20);
        let turn = (r % 20) as u32;
        let sensible = r < 1360;
        let specific = r < 1200;
        // judge r % 3 dissents on both labels
        for j in 0..SSA_JUDGES {
            let dissent = j == r % SSA_JUDGES;
            let s = sensible ^ dissent;
            let p = if s { specific ^ dissent } else { false };
            out.push(Judgment::new(conv.clone(), turn, format!("judge{j}"), s, p).0);
        }
    }
    out
}

fn at(day: NaiveDate, hour: u32) -> DateTime<Utc> {
    Utc.from_utc_datetime(&day.and_hms_opt(hour, 0, 0).unwrap())
}

fn turn(ts: DateTime<Utc>, text: &str) -> Turn {
    Turn { timestamp: ts, user_text: text.to_string(), reply_kind: ReplyKind::Answer, intent_id: None, confidence: 0.9 }
}

pub const STICKY_DAY: (i32, u32, u32) = (2020, 5, 31);

pub fn sticky_day() -> NaiveDate {
    NaiveDate::from_ymd_opt(STICKY_DAY.0, STICKY_DAY.1, STICKY_DAY.2).unwrap()
}

/// 10000 sessions active in the 30 days ending on the sticky day, 1685 of
/// them on that day. Extra sessions just outside the window must not count.
pub fn populate_stickiness(store: &Store) {
    let day = sticky_day();
    let mut turns = Vec::new();
    for i in 0..10_000u32 {
        let d = if i < 1685 { day } else { day - Duration::days(1 + (i % 29) as i64) };
        turns.push((format!("m{i:05}"), turn(at(d, i % 24), "hi")));
    }
    for i in 0..50u32 {
        turns.push((format!("old{i}"), turn(at(day - Duration::days(30), 23), "hi")));
        turns.push((format!("new{i}"), turn(at(day + Duration::days(1), 0), "hi")));
    }
    store.record_batch(turns.iter().map(|(s, t)| (s.as_str(), Channel::Web, t))).unwrap();
}

pub fn stickiness_stats(store: &Store) -> UsageStats {
    let day = sticky_day();
    store.usage_stats(at(day - Duration::days(29), 0), at(day + Duration::days(1), 0), day).unwrap()
}

pub const CONVERSATION_LENGTHS: [usize; 5] = [1, 32, 1, 1, 2];

/// Five conversations with 1, 32, 1, 1 and 2 questions inside March 2020.
pub fn populate_conversations(store: &Store) {
    let start = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
    let mut turns = Vec::new();
    for (c, &n) in CONVERSATION_LENGTHS.iter().enumerate() {
        for k in 0..n {
            let ts = at(start + Duration::days(c as i64 * 3), 8) + Duration::minutes(k as i64);
            turns.push((format!("conv{c}"), turn(ts, &format!("question {k}"))));
        }
    }
    // one conversation entirely outside the range
    turns.push(("april".to_string(), turn(at(NaiveDate::from_ymd_opt(2020, 4, 2).unwrap(), 9), "late")));
    store.record_batch(turns.iter().map(|(s, t)| (s.as_str(), Channel::MessengerSim, t))).unwrap();
}

pub fn conversation_stats(store: &Store) -> UsageStats {
    let march = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
    let april = NaiveDate::from_ymd_opt(2020, 4, 1).unwrap();
    store.usage_stats(at(march, 0), at(april, 0), NaiveDate::from_ymd_opt(2020, 3, 31).unwrap()).unwrap()
}
