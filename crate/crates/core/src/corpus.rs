//! Intent catalog: language groups, FAQ/chitchat intents, fallback messages.
//!
//! The catalog is a single YAML file with three top-level keys:
//!
//! ```yaml
//! language_groups:
//!   - id: fr_tunizi
//!     reply_language: French
//! fallbacks:
//!   fr_tunizi: "Je n'ai pas compris, pouvez-vous reformuler ?"
//! intents:
//!   - id: greet.fr_tunizi
//!     category: chitchat
//!     language_group: fr_tunizi
//!     questions: ["3asslama", "aslema"]
//!     answer: "Mar7be bik"
//!     external_service: null   # optional
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::featurizer::normalize;

/// Language group ids shipped with the seed corpus.
pub const SEED_LANGUAGE_GROUPS: [&str; 6] =
    ["msa_darija", "fr_tunizi", "english", "yoruba", "hausa", "igbo"];

pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog parse error{}: {message}", location_suffix(*.line, *.column))]
    Parse {
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },
    #[error("invalid catalog:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("validation fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("need at least 2 examples to split, got {0}")]
    TooFewExamples(usize),
}

fn location_suffix(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" at line {l}, column {c}"),
        (Some(l), None) => format!(" at line {l}"),
        _ => String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Faq,
    Chitchat,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Faq => f.write_str("faq"),
            Category::Chitchat => f.write_str("chitchat"),
        }
    }
}

/// A bundle of question dialects that share one reply language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageGroup {
    pub id: String,
    pub reply_language: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentEntry {
    #[serde(rename = "id")]
    pub intent_id: String,
    pub category: Category,
    pub language_group: String,
    pub questions: Vec<String>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_service: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentCatalog {
    pub language_groups: Vec<LanguageGroup>,
    pub fallbacks: BTreeMap<String, String>,
    pub intents: Vec<IntentEntry>,
}

/// One (question, intent) training or evaluation pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub intent_id: String,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, intent_id: impl Into<String>) -> Self {
        Self { text: text.into(), intent_id: intent_id.into() }
    }
}

fn valid_intent_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'_' | b'.' | b'-'))
}

impl IntentCatalog {
    /// Parses catalog text and checks every invariant.
    pub fn from_yaml_str(text: &str) -> Result<Self, CorpusError> {
        if text.starts_with('\u{feff}') {
            return Err(CorpusError::Parse {
                line: Some(1),
                column: Some(1),
                message: "byte-order mark is not allowed".into(),
            });
        }
        if text.trim().is_empty() {
            return Err(CorpusError::Parse {
                line: None,
                column: None,
                message: "catalog file is empty".into(),
            });
        }
        let catalog: IntentCatalog = serde_yaml::from_str(text).map_err(|e| {
            let loc = e.location();
            CorpusError::Parse {
                line: loc.as_ref().map(|l| l.line()),
                column: loc.as_ref().map(|l| l.column()),
                message: e.to_string(),
            }
        })?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn to_yaml_string(&self) -> String {
        serde_yaml::to_string(self).expect("catalog serializes")
    }

    /// Collects every invariant violation rather than stopping at the first.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut problems = Vec::new();

        let mut group_ids = HashSet::new();
        for g in &self.language_groups {
            if !group_ids.insert(g.id.as_str()) {
                problems.push(format!("duplicate language group \"{}\"", g.id));
            }
            if g.reply_language.trim().is_empty() {
                problems.push(format!("language group \"{}\" has an empty reply_language", g.id));
            }
        }
        for key in self.fallbacks.keys() {
            if !group_ids.contains(key.as_str()) {
                problems.push(format!("fallback for unknown language group \"{key}\""));
            }
        }

        let mut counts: HashMap<&str, usize> = HashMap::new();
        for e in &self.intents {
            *counts.entry(e.intent_id.as_str()).or_default() += 1;
        }
        let mut reported = HashSet::new();
        for e in &self.intents {
            let id = e.intent_id.as_str();
            if counts[id] > 1 && reported.insert(id) {
                problems.push(format!(
                    "duplicate intent id \"{id}\" (\"{id}\" appears {} times)",
                    counts[id]
                ));
            }
            if !valid_intent_id(id) {
                problems.push(format!("intent id \"{id}\" must match [a-z0-9_.-]+"));
            }
            if !group_ids.contains(e.language_group.as_str()) {
                problems.push(format!(
                    "intent \"{id}\" references unknown language group \"{}\"",
                    e.language_group
                ));
            } else if !self.fallbacks.contains_key(&e.language_group) {
                problems.push(format!(
                    "language group \"{}\" (used by \"{id}\") has no fallback message",
                    e.language_group
                ));
            }
            if e.questions.is_empty() {
                problems.push(format!("intent \"{id}\" has no questions"));
            }
            for (i, q) in e.questions.iter().enumerate() {
                if normalize(q).is_empty() {
                    problems.push(format!("intent \"{id}\" question #{i} is empty after normalization"));
                }
            }
            if e.answer.trim().is_empty() {
                problems.push(format!("intent \"{id}\" has an empty answer"));
            }
            if let Some(svc) = &e.external_service {
                if svc.trim().is_empty() {
                    problems.push(format!("intent \"{id}\" has an empty external_service key"));
                }
            }
        }
        if counts.len() < 2 {
            problems.push(format!("catalog needs at least 2 distinct intents, found {}", counts.len()));
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(CorpusError::Invalid(problems))
        }
    }

    pub fn intent(&self, intent_id: &str) -> Option<&IntentEntry> {
        self.intents.iter().find(|e| e.intent_id == intent_id)
    }

    pub fn fallback(&self, language_group: &str) -> Option<&str> {
        self.fallbacks.get(language_group).map(String::as_str)
    }

    pub fn language_group(&self, id: &str) -> Option<&LanguageGroup> {
        self.language_groups.iter().find(|g| g.id == id)
    }

    /// (faq, chitchat) intent counts per language group, in group declaration order.
    pub fn category_counts(&self) -> Vec<(String, usize, usize)> {
        self.language_groups
            .iter()
            .map(|g| {
                let of = |c: Category| {
                    self.intents.iter().filter(|e| e.language_group == g.id && e.category == c).count()
                };
                (g.id.clone(), of(Category::Faq), of(Category::Chitchat))
            })
            .collect()
    }
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<IntentCatalog, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    IntentCatalog::from_yaml_str(&text)
}

pub fn save_catalog(catalog: &IntentCatalog, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    std::fs::write(path, catalog.to_yaml_string()).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// One example per (question, intent) pair, in catalog order.
pub fn flatten(catalog: &IntentCatalog) -> Vec<LabeledExample> {
    catalog
        .intents
        .iter()
        .flat_map(|e| e.questions.iter().map(|q| LabeledExample::new(q.clone(), e.intent_id.clone())))
        .collect()
}

/// Stratified, seeded train/validation split.
///
/// Each intent contributes `round(n * fraction)` examples to validation, capped
/// at `n - 1` so at least one example of every intent stays in train. Intents
/// with a single example always land in train. Relative input order is
/// preserved within both outputs.
pub fn split(
    examples: &[LabeledExample],
    validation_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>), CorpusError> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(CorpusError::BadFraction(validation_fraction));
    }
    if examples.len() < 2 {
        return Err(CorpusError::TooFewExamples(examples.len()));
    }

    let mut by_intent: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        match by_intent.iter_mut().find(|(id, _)| *id == ex.intent_id) {
            Some((_, idx)) => idx.push(i),
            None => by_intent.push((ex.intent_id.as_str(), vec![i])),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_validation = vec![false; examples.len()];
    for (_, mut idx) in by_intent {
        let n = idx.len();
        let take = ((n as f64 * validation_fraction).round() as usize).min(n - 1);
        idx.shuffle(&mut rng);
        for &i in &idx[..take] {
            in_validation[i] = true;
        }
    }

    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (ex, v) in examples.iter().zip(in_validation) {
        if v { validation.push(ex.clone()) } else { train.push(ex.clone()) }
    }
    Ok((train, validation))
}
