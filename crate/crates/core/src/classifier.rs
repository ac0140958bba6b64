//! Intent prediction and rejection-threshold calibration.
//!
//! Confidence is the raw cosine between the utterance embedding and an
//! intent's label embedding, so it lies in [−1, 1], not [0, 1].

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledExample;
use crate::embednet::{EmbeddingModel, ModelError};
use crate::featurizer::FeatureError;
use crate::text::{escape_field, unescape_field};

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no validation example was predicted correctly; threshold is undefined")]
    Uncalibratable,
    #[error("calibration report: {0}")]
    Report(String),
    #[error("calibration report I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Every intent exactly once, by confidence descending, ties by tag index ascending.
    pub ranked: Vec<(String, f64)>,
}

impl Prediction {
    pub fn top(&self) -> (&str, f64) {
        let (id, c) = &self.ranked[0];
        (id, *c)
    }

    pub fn confidence_of(&self, intent_id: &str) -> Option<f64> {
        self.ranked.iter().find(|(id, _)| id == intent_id).map(|(_, c)| *c)
    }
}

pub fn predict(model: &EmbeddingModel, text: &str) -> Result<Prediction, ClassifyError> {
    let x = model.vocab.featurize(text)?;
    let scores = model.scores(&x)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps ascending tag index among equal scores
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let ranked = order
        .into_iter()
        .map(|k| (model.vocab.tag(k).expect("tag index in range").to_string(), scores[k]))
        .collect();
    Ok(Prediction { ranked })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub text: String,
    pub true_intent: String,
    pub predicted_intent: String,
    pub confidence: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub threshold: f64,
    pub per_example: Vec<CalibrationRow>,
    pub n_correct: usize,
}

/// Threshold = min top-1 confidence over correctly predicted validation examples.
pub fn calibrate_threshold(
    model: &EmbeddingModel,
    validation: &[LabeledExample],
) -> Result<CalibrationReport, ClassifyError> {
    if validation.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    let mut per_example = Vec::with_capacity(validation.len());
    for ex in validation {
        let p = predict(model, &ex.text)?;
        let (top, confidence) = p.top();
        per_example.push(CalibrationRow {
            text: ex.text.clone(),
            true_intent: ex.intent_id.clone(),
            predicted_intent: top.to_string(),
            confidence,
            correct: top == ex.intent_id,
        });
    }
    threshold_from_rows(per_example)
}

/// Applies the min-over-correct rule to already scored rows.
pub fn threshold_from_rows(per_example: Vec<CalibrationRow>) -> Result<CalibrationReport, ClassifyError> {
    let n_correct = per_example.iter().filter(|r| r.correct).count();
    let threshold = per_example
        .iter()
        .filter(|r| r.correct)
        .map(|r| r.confidence)
        .min_by(f64::total_cmp)
        .ok_or(ClassifyError::Uncalibratable)?;
    Ok(CalibrationReport { threshold, per_example, n_correct })
}

pub fn evaluate_accuracy(model: &EmbeddingModel, dataset: &[LabeledExample]) -> Result<f64, ClassifyError> {
    if dataset.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    let mut correct = 0usize;
    for ex in dataset {
        if predict(model, &ex.text)?.top().0 == ex.intent_id {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

const REPORT_COLUMNS: &str = "text\ttrue_intent\tpredicted_intent\tconfidence\tcorrect";

impl CalibrationReport {
    /// Tab-separated report: two `#` metadata lines, a header, one row per example.
    /// Floats are written in shortest round-trip form.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# threshold\t{}", self.threshold).unwrap();
        writeln!(s, "# n_correct\t{}", self.n_correct).unwrap();
        writeln!(s, "{REPORT_COLUMNS}").unwrap();
        for r in &self.per_example {
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                escape_field(&r.text),
                r.true_intent,
                r.predicted_intent,
                r.confidence,
                u8::from(r.correct)
            )
            .unwrap();
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self, ClassifyError> {
        let bad = |line: usize, m: &str| ClassifyError::Report(format!("line {line}: {m}"));
        let mut threshold = None;
        let mut n_correct = None;
        let mut per_example = Vec::new();
        let mut seen_header = false;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if let Some(meta) = line.strip_prefix("# ") {
                let (key, value) = meta.split_once('\t').ok_or_else(|| bad(lineno, "metadata needs a tab"))?;
                match key {
                    "threshold" => threshold = Some(value.parse::<f64>().map_err(|e| bad(lineno, &e.to_string()))?),
                    "n_correct" => n_correct = Some(value.parse::<usize>().map_err(|e| bad(lineno, &e.to_string()))?),
                    _ => {}
                }
                continue;
            }
            if !seen_header {
                if line != REPORT_COLUMNS {
                    return Err(bad(lineno, "expected column header"));
                }
                seen_header = true;
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad(lineno, "expected 5 fields"));
            }
            per_example.push(CalibrationRow {
                text: unescape_field(f[0]),
                true_intent: f[1].to_string(),
                predicted_intent: f[2].to_string(),
                confidence: f[3].parse().map_err(|_| bad(lineno, "bad confidence"))?,
                correct: match f[4] {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad(lineno, "correct must be 0 or 1")),
                },
            });
        }
        Ok(Self {
            threshold: threshold.ok_or_else(|| ClassifyError::Report("missing threshold".into()))?,
            n_correct: n_correct.unwrap_or_else(|| per_example.iter().filter(|r| r.correct).count()),
            per_example,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ClassifyError> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ClassifyError> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embednet::{init_model, Hyperparams};
    use crate::featurizer::build_vocabulary;

    fn row(conf: f64, correct: bool) -> CalibrationRow {
        CalibrationRow {
            text: format!("q{conf}"),
            true_intent: "a".into(),
            predicted_intent: if correct { "a".into() } else { "b".into() },
            confidence: conf,
            correct,
        }
    }

    fn untrained() -> EmbeddingModel {
        let train = vec![
            LabeledExample::new("3asslama", "greet"),
            LabeledExample::new("merci", "thanks"),
            LabeledExample::new("kifech ne7mi rou7i", "protect"),
        ];
        init_model(build_vocabulary(&train, 1).unwrap(), Hyperparams::default()).unwrap()
    }

    #[test]
    fn threshold_is_min_over_correct() {
        let rows = vec![row(0.93, true), row(0.71, true), row(0.88, true), row(0.95, false)];
        let r = threshold_from_rows(rows).unwrap();
        assert_eq!(r.threshold, 0.71);
        assert_eq!(r.n_correct, 3);
    }

    #[test]
    fn all_wrong_is_uncalibratable() {
        let rows = vec![row(0.9, false), row(0.2, false)];
        assert!(matches!(threshold_from_rows(rows), Err(ClassifyError::Uncalibratable)));
    }

    #[test]
    fn single_correct_sets_threshold() {
        assert_eq!(threshold_from_rows(vec![row(0.42, true)]).unwrap().threshold, 0.42);
    }

    #[test]
    fn prediction_covers_all_intents() {
        let m = untrained();
        for text in ["3asslama", "", "zzzz qqq", "كيف"] {
            let p = predict(&m, text).unwrap();
            assert_eq!(p.ranked.len(), 3);
            assert!(p.ranked.iter().all(|(_, c)| (-1.0..=1.0).contains(c)));
            assert!(p.ranked.windows(2).all(|w| w[0].1 >= w[1].1));
            assert_eq!(p, predict(&m, text).unwrap());
        }
    }

    #[test]
    fn ties_break_to_lowest_tag_index() {
        let mut m = untrained();
        let row0 = m.label_table.row(0).to_vec();
        m.label_table.row_mut(2).copy_from_slice(&row0);
        m.label_table.row_mut(1).copy_from_slice(&row0);
        let p = predict(&m, "merci").unwrap();
        let ids: Vec<&str> = p.ranked.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["greet", "thanks", "protect"]);
    }

    #[test]
    fn accuracy_edge_cases() {
        let m = untrained();
        assert!(matches!(evaluate_accuracy(&m, &[]), Err(ClassifyError::EmptyDataset)));
        let data: Vec<_> = ["3asslama", "merci", "kifech"]
            .iter()
            .map(|t| LabeledExample::new(*t, predict(&m, t).unwrap().top().0))
            .collect();
        assert_eq!(evaluate_accuracy(&m, &data).unwrap(), 1.0);
        let wrong: Vec<_> = data
            .iter()
            .map(|e| {
                let p = predict(&m, &e.text).unwrap();
                LabeledExample::new(e.text.clone(), p.ranked[1].0.clone())
            })
            .collect();
        assert_eq!(evaluate_accuracy(&m, &wrong).unwrap(), 0.0);
        let mut doubled = data.clone();
        doubled.extend(wrong.iter().cloned());
        let half = evaluate_accuracy(&m, &doubled).unwrap();
        let mut quadrupled = doubled.clone();
        quadrupled.extend(doubled.iter().cloned());
        assert_eq!(evaluate_accuracy(&m, &quadrupled).unwrap(), half);
    }

    #[test]
    fn report_tsv_round_trip() {
        let mut rows = vec![row(0.93, true), row(-0.125, false)];
        rows[0].text = "tab\there\nnewline".into();
        let r = threshold_from_rows(rows).unwrap();
        let back = CalibrationReport::from_tsv(&r.to_tsv()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn report_requires_threshold() {
        assert!(CalibrationReport::from_tsv(REPORT_COLUMNS).is_err());
    }
}
