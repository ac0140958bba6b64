//! Sensibleness and Specificity Average from human judgments.
//!
//! Judgment file: UTF-8, tab-separated, header
//! `conversation_id  turn_index  judge_id  sensible  specific`, booleans `0`/`1`.
//! Per response, judges are aggregated by strict majority (ties count as
//! negative).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const JUDGMENT_HEADER: [&str; 5] = ["conversation_id", "turn_index", "judge_id", "sensible", "specific"];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("cannot read judgments: {0}")]
    Io(#[from] std::io::Error),
    #[error("judgment file row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("no judgments to score")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub conversation_id: String,
    pub turn_index: u32,
    pub judge_id: String,
    pub sensible: bool,
    /// Never true when `sensible` is false.
    pub specific: bool,
}

impl Judgment {
    /// Builds a judgment, forcing `specific = false` when not sensible.
    /// The second value reports whether that coercion happened.
    pub fn new(conversation_id: impl Into<String>, turn_index: u32, judge_id: impl Into<String>, sensible: bool, specific: bool) -> (Self, bool) {
        let coerced = specific && !sensible;
        (
            Self {
                conversation_id: conversation_id.into(),
                turn_index,
                judge_id: judge_id.into(),
                sensible,
                specific: specific && sensible,
            },
            coerced,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Ingested {
    pub judgments: Vec<Judgment>,
    /// Rows where `specific=1, sensible=0` was coerced to `specific=0`.
    pub coerced: usize,
}

fn parse_bool(s: &str, row: usize, col: &str) -> Result<bool, EvalError> {
    match s {
        "1" => Ok(true),
        "0" => Ok(false),
        _ => Err(EvalError::Parse { row, message: format!("{col} must be 0 or 1, got {s:?}") }),
    }
}

pub fn parse_judgments(text: &str) -> Result<Ingested, EvalError> {
    let mut out = Ingested::default();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(out);
    };
    let cols: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
    if cols != JUDGMENT_HEADER {
        return Err(EvalError::Parse { row: 1, message: format!("expected header {:?}", JUDGMENT_HEADER.join("\t")) });
    }
    for (i, line) in lines {
        let row = i + 1;
        let f: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if f.len() != 5 {
            return Err(EvalError::Parse { row, message: format!("expected 5 fields, got {}", f.len()) });
        }
        let turn_index =
            f[1].parse().map_err(|_| EvalError::Parse { row, message: format!("bad turn_index {:?}", f[1]) })?;
        let (j, coerced) = Judgment::new(f[0], turn_index, f[2], parse_bool(f[3], row, "sensible")?, parse_bool(f[4], row, "specific")?);
        if coerced {
            out.coerced += 1;
        }
        out.judgments.push(j);
    }
    if out.coerced > 0 {
        log::warn!("{} judgment(s) marked specific but not sensible were coerced to not specific", out.coerced);
    }
    Ok(out)
}

pub fn ingest_judgments(path: impl AsRef<Path>) -> Result<Ingested, EvalError> {
    parse_judgments(&std::fs::read_to_string(path)?)
}

pub fn judgments_to_tsv(judgments: &[Judgment]) -> String {
    let mut s = JUDGMENT_HEADER.join("\t");
    s.push('\n');
    for j in judgments {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            j.conversation_id,
            j.turn_index,
            j.judge_id,
            u8::from(j.sensible),
            u8::from(j.specific)
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsaReport {
    pub sensibleness: f64,
    pub specificity: f64,
    pub ssa: f64,
    pub n_responses: usize,
    pub n_judges: usize,
}

impl fmt::Display for SsaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "responses {}", self.n_responses)?;
        writeln!(f, "judges {}", self.n_judges)?;
        writeln!(f, "sensibleness {:.1}%", 100.0 * self.sensibleness)?;
        writeln!(f, "specificity {:.1}%", 100.0 * self.specificity)?;
        write!(f, "ssa {:.1}%", 100.0 * self.ssa)
    }
}

pub fn ssa(judgments: &[Judgment]) -> Result<SsaReport, EvalError> {
    if judgments.is_empty() {
        return Err(EvalError::Empty);
    }
    // (votes, sensible votes, specific votes) per response
    let mut responses: BTreeMap<(&str, u32), (usize, usize, usize)> = BTreeMap::new();
    let mut judges: Vec<&str> = Vec::new();
    for j in judgments {
        let e = responses.entry((j.conversation_id.as_str(), j.turn_index)).or_default();
        e.0 += 1;
        e.1 += usize::from(j.sensible);
        e.2 += usize::from(j.specific && j.sensible);
        if !judges.contains(&j.judge_id.as_str()) {
            judges.push(&j.judge_id);
        }
    }
    let majority = |yes: usize, total: usize| 2 * yes > total;
    let n = responses.len();
    let sensible = responses.values().filter(|&&(t, s, _)| majority(s, t)).count();
    let specific = responses.values().filter(|&&(t, _, p)| majority(p, t)).count();
    let sensibleness = sensible as f64 / n as f64;
    let specificity = specific as f64 / n as f64;
    Ok(SsaReport {
        sensibleness,
        specificity,
        ssa: (sensibleness + specificity) / 2.0,
        n_responses: n,
        n_judges: judges.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn j(conv: &str, turn: u32, judge: &str, sensible: bool, specific: bool) -> Judgment {
        Judgment::new(conv, turn, judge, sensible, specific).0
    }

    #[test]
    fn all_positive_and_all_negative() {
        let pos: Vec<_> = (0..4).map(|t| j("c", t, "a", true, true)).collect();
        let r = ssa(&pos).unwrap();
        assert_eq!((r.sensibleness, r.specificity, r.ssa), (1.0, 1.0, 1.0));
        let neg: Vec<_> = (0..4).map(|t| j("c", t, "a", false, true)).collect();
        let r = ssa(&neg).unwrap();
        assert_eq!((r.sensibleness, r.specificity, r.ssa), (0.0, 0.0, 0.0));
    }

    #[test]
    fn majority_and_ties() {
        let js = vec![
            j("c", 0, "a", true, true),
            j("c", 0, "b", true, false),
            j("c", 0, "c", false, false),
            // two judges split: tie counts negative
            j("c", 1, "a", true, true),
            j("c", 1, "b", false, false),
        ];
        let r = ssa(&js).unwrap();
        assert_eq!(r.n_responses, 2);
        assert_eq!(r.n_judges, 3);
        assert_eq!(r.sensibleness, 0.5);
        assert_eq!(r.specificity, 0.0);
        assert_eq!(r.ssa, 0.25);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(ssa(&[]), Err(EvalError::Empty)));
    }

    #[test]
    fn parse_coerces_and_counts() {
        let text = "conversation_id\tturn_index\tjudge_id\tsensible\tspecific\nc1\t0\tj1\t0\t1\nc1\t0\tj2\t1\t1\n";
        let ing = parse_judgments(text).unwrap();
        assert_eq!(ing.coerced, 1);
        assert!(!ing.judgments[0].specific);
        assert!(ing.judgments[1].specific);
    }

    #[test]
    fn parse_errors_name_rows() {
        assert!(parse_judgments("").unwrap().judgments.is_empty());
        let bad = "conversation_id\tturn_index\tjudge_id\tsensible\tspecific\nc1\t0\tj1\t1\t1\nc1\tx\tj1\t1\t1\n";
        match parse_judgments(bad) {
            Err(EvalError::Parse { row: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_judgments("a\tb\n"), Err(EvalError::Parse { row: 1, .. })));
        let bad_bool = "conversation_id\tturn_index\tjudge_id\tsensible\tspecific\nc1\t0\tj1\tyes\t1\n";
        assert!(matches!(parse_judgments(bad_bool), Err(EvalError::Parse { row: 2, .. })));
    }

    #[test]
    fn tsv_round_trip() {
        let js = vec![j("c1", 0, "a", true, false), j("c2", 19, "b", true, true)];
        assert_eq!(parse_judgments(&judgments_to_tsv(&js)).unwrap().judgments, js);
    }

    fn judgments() -> impl Strategy<Value = Vec<Judgment>> {
        proptest::collection::vec((0u8..5, 0u32..4, 0u8..3, any::<bool>(), any::<bool>()), 1..60).prop_map(|rows| {
            rows.into_iter()
                .map(|(c, t, g, s, p)| j(&format!("c{c}"), t, &format!("j{g}"), s, p))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn report_invariants(js in judgments()) {
            let r = ssa(&js).unwrap();
            prop_assert!(r.specificity <= r.sensibleness);
            prop_assert_eq!(r.ssa, (r.sensibleness + r.specificity) / 2.0);
            for v in [r.sensibleness, r.specificity, r.ssa] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn order_does_not_matter(js in judgments(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = js.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (a, b) = (ssa(&js).unwrap(), ssa(&shuffled).unwrap());
            prop_assert_eq!(a.sensibleness, b.sensibleness);
            prop_assert_eq!(a.specificity, b.specificity);
            prop_assert_eq!(a.n_responses, b.n_responses);
        }
    }
}
