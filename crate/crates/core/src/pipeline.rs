//! Catalog → trained model → calibrated threshold.

use crate::classifier::{calibrate_threshold, CalibrationReport, ClassifyError};
use crate::corpus::{flatten, split, CorpusError, IntentCatalog, LabeledExample, DEFAULT_VALIDATION_FRACTION};
use crate::embednet::{self, init_model, EmbeddingModel, Hyperparams, ModelError, TrainReport};
use crate::featurizer::{build_vocabulary_with, FeatureError, SparseVector, Vocabulary, VocabularyConfig};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub hyperparams: Hyperparams,
    /// Share of each intent's questions held out for calibration.
    pub validation_fraction: f64,
    pub vocabulary: VocabularyConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            hyperparams: Hyperparams::default(),
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            vocabulary: VocabularyConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: EmbeddingModel,
    pub report: TrainReport,
    pub train: Vec<LabeledExample>,
    pub validation: Vec<LabeledExample>,
}

/// The split that `train_catalog` used for a model trained with `seed`.
pub fn split_catalog(
    catalog: &IntentCatalog,
    validation_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>), PipelineError> {
    Ok(split(&flatten(catalog), validation_fraction, seed)?)
}

pub fn encode_examples(
    vocab: &Vocabulary,
    examples: &[LabeledExample],
) -> Result<Vec<(SparseVector, usize)>, PipelineError> {
    examples
        .iter()
        .map(|ex| {
            let y = vocab
                .tag_index(&ex.intent_id)
                .ok_or_else(|| ModelError::UnknownIntent(ex.intent_id.clone()))?;
            Ok((vocab.featurize(&ex.text)?, y))
        })
        .collect()
}

/// Splits (seeded by the hyperparameter seed), builds the vocabulary on the
/// training part, initializes and trains.
pub fn train_catalog(catalog: &IntentCatalog, opts: &TrainOptions) -> Result<TrainedModel, PipelineError> {
    let (train, validation) = split_catalog(catalog, opts.validation_fraction, opts.hyperparams.rng_seed)?;
    let vocab = build_vocabulary_with(&train, opts.vocabulary)?;
    let encoded = encode_examples(&vocab, &train)?;
    let model = init_model(vocab, opts.hyperparams.clone())?;
    let (model, report) = embednet::train(model, &encoded, &opts.hyperparams)?;
    Ok(TrainedModel { model, report, train, validation })
}

/// Recreates the held-out split from the model's seed and calibrates on it.
pub fn calibrate_catalog(
    catalog: &IntentCatalog,
    model: &EmbeddingModel,
    validation_fraction: f64,
) -> Result<CalibrationReport, PipelineError> {
    let (_, validation) = split_catalog(catalog, validation_fraction, model.hyperparams.rng_seed)?;
    Ok(calibrate_threshold(model, &validation)?)
}
