//! Multilingual, multidialectal FAQ/chitchat intent engine.
//!
//! - [`corpus`]: intent catalog loading, validation, flattening, splitting
//! - [`featurizer`]: normalization, character n-grams, vocabulary, sparse encoding
//! - [`embednet`]: input tower + label table trained with a cosine ranking loss
//! - [`classifier`]: prediction with confidence, threshold calibration
//! - [`dialogue`]: threshold-gated answering, external services, fallback
//! - [`datastore`]: conversation store, unanswered-question log, usage analytics
//! - [`evalkit`]: sensibleness/specificity (SSA) from human judgments

pub mod classifier;
pub mod corpus;
pub mod datastore;
pub mod dialogue;
pub mod embednet;
pub mod evalkit;
pub mod featurizer;
pub mod pipeline;
pub mod text;
