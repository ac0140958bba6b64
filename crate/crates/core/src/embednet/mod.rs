//! Shared input/label embedding space scored by cosine similarity.
//!
//! Input tower:
//!
//! ```text
//! h0  = Σ_i x_i · gram_table[i]          (dim_hidden)
//! h1  = relu(W1 · h0 + b1)               (dim_hidden)
//! out = W2 · h1 + b2                     (dim_embed)
//! ```
//!
//! Labels are plain rows of `label_table` in the same `dim_embed` space.
//! Training minimizes a two-margin ranking loss on cosine similarities
//! against uniformly sampled negative labels.

mod artifact;
mod train;

pub use artifact::{from_bytes, load_model, model_version, save_model, to_bytes, ArtifactError, FORMAT_VERSION, MAGIC};
pub use train::{train, TrainReport};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::featurizer::{SparseVector, Vocabulary};

/// Norm below which a vector is treated as zero by [`cosine`].
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("vocabulary has no n-grams")]
    EmptyVocabulary,
    #[error("vocabulary has no intent tags")]
    NoLabels,
    #[error("invalid hyperparameters: {0}")]
    BadHyperparams(String),
    #[error("input dimension {got} does not match vocabulary size {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label index {index} out of range for {count} labels")]
    LabelOutOfRange { index: usize, count: usize },
    #[error("negative list is empty")]
    NoNegatives,
    #[error("negative list contains the true label {0}")]
    NegativeIsPositive(usize),
    #[error("training needs at least 2 intents, vocabulary has {0}")]
    TooFewIntents(usize),
    #[error("training example intent \"{0}\" is not in the vocabulary")]
    UnknownIntent(String),
    #[error("non-finite loss at epoch {epoch}, step {step} (intent index {label})")]
    NonFiniteLoss { epoch: usize, step: usize, label: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub dim_embed: usize,
    pub dim_hidden: usize,
    pub margin_pos: f64,
    pub margin_neg: f64,
    pub negatives_per_example: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub rng_seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            dim_embed: 20,
            dim_hidden: 128,
            margin_pos: 0.8,
            margin_neg: -0.4,
            negatives_per_example: 10,
            learning_rate: 0.01,
            epochs: 300,
            l2: 1e-6,
            rng_seed: 42,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::BadHyperparams(m.into()));
        if self.dim_embed == 0 || self.dim_hidden == 0 {
            return bad("dimensions must be positive");
        }
        if self.margin_pos.partial_cmp(&self.margin_neg) != Some(std::cmp::Ordering::Greater) {
            return bad("margin_pos must exceed margin_neg");
        }
        if self.negatives_per_example == 0 {
            return bad("negatives_per_example must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        Ok(())
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let dist = Uniform::new_inclusive(-bound, bound);
        Self { rows, cols, data: (0..rows * cols).map(|_| dist.sample(rng)).collect() }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · v`
    fn mul_vec(&self, v: &[f64], bias: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| bias[r] + self.row(r).iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// `selfᵀ · v`
    fn mul_vec_t(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr != 0.0 {
                for (o, &a) in out.iter_mut().zip(self.row(r)) {
                    *o += a * vr;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub vocab: Vocabulary,
    pub hyperparams: Hyperparams,
    /// |V| × dim_hidden
    pub gram_table: Matrix,
    /// dim_hidden × dim_hidden
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// dim_embed × dim_hidden
    pub w2: Matrix,
    pub b2: Vec<f64>,
    /// L × dim_embed
    pub label_table: Matrix,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub h0: Vec<f64>,
    pub z1: Vec<f64>,
    pub h1: Vec<f64>,
    pub out: Vec<f64>,
}

/// Uniform(±1/√fan_in) initialization, seeded by `hp.rng_seed`.
///
/// Lookup tables count their one-hot input width as fan-in: |V| for the gram
/// table and L for the label table.
pub fn init_model(vocab: Vocabulary, hp: Hyperparams) -> Result<EmbeddingModel, ModelError> {
    hp.validate()?;
    let v = vocab.num_grams();
    let l = vocab.num_tags();
    if v == 0 {
        return Err(ModelError::EmptyVocabulary);
    }
    if l == 0 {
        return Err(ModelError::NoLabels);
    }
    let (h, e) = (hp.dim_hidden, hp.dim_embed);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.rng_seed);
    let bound = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();

    let gram_table = Matrix::uniform(v, h, bound(v), &mut rng);
    let w1 = Matrix::uniform(h, h, bound(h), &mut rng);
    let b1 = Matrix::uniform(1, h, bound(h), &mut rng).data;
    let w2 = Matrix::uniform(e, h, bound(h), &mut rng);
    let b2 = Matrix::uniform(1, e, bound(h), &mut rng).data;
    let label_table = Matrix::uniform(l, e, bound(l), &mut rng);

    Ok(EmbeddingModel { vocab, hyperparams: hp, gram_table, w1, b1, w2, b2, label_table })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity clamped to [−1, 1]; 0 when either vector is (near) zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, ModelError> {
    if a.len() != b.len() {
        return Err(ModelError::LengthMismatch(a.len(), b.len()));
    }
    Ok(cosine_unchecked(a, b))
}

fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na < DEGENERATE_NORM || nb < DEGENERATE_NORM {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// `max(0, v)` that lets NaN through.
fn hinge(v: f64) -> f64 {
    if v.is_nan() { v } else { v.max(0.0) }
}

/// Gradients of cos(a, b) with respect to `a` and `b`.
fn cosine_grads(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let (na, nb) = (norm(a), norm(b));
    if na < DEGENERATE_NORM || nb < DEGENERATE_NORM {
        return (0.0, vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    let s = dot(a, b) / (na * nb);
    let ga = a.iter().zip(b).map(|(&ai, &bi)| bi / (na * nb) - s * ai / (na * na)).collect();
    let gb = a.iter().zip(b).map(|(&ai, &bi)| ai / (na * nb) - s * bi / (nb * nb)).collect();
    (s.clamp(-1.0, 1.0), ga, gb)
}

/// Gradient of the ranking loss for one example.
///
/// Gram and label gradients are sparse: only rows that took part in the
/// forward pass appear.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub gram_rows: Vec<(usize, Vec<f64>)>,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub label_rows: Vec<(usize, Vec<f64>)>,
}

impl EmbeddingModel {
    pub fn num_labels(&self) -> usize {
        self.label_table.rows
    }

    pub fn dim_embed(&self) -> usize {
        self.hyperparams.dim_embed
    }

    fn check_input(&self, x: &SparseVector) -> Result<(), ModelError> {
        if x.dimension() != self.gram_table.rows {
            return Err(ModelError::DimensionMismatch { expected: self.gram_table.rows, got: x.dimension() });
        }
        Ok(())
    }

    fn check_label(&self, index: usize) -> Result<(), ModelError> {
        if index >= self.num_labels() {
            return Err(ModelError::LabelOutOfRange { index, count: self.num_labels() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &SparseVector) -> Result<Forward, ModelError> {
        self.check_input(x)?;
        let mut h0 = vec![0.0; self.hyperparams.dim_hidden];
        for &(i, c) in x.pairs() {
            for (acc, &w) in h0.iter_mut().zip(self.gram_table.row(i)) {
                *acc += c * w;
            }
        }
        let z1 = self.w1.mul_vec(&h0, &self.b1);
        let h1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
        let out = self.w2.mul_vec(&h1, &self.b2);
        Ok(Forward { h0, z1, h1, out })
    }

    pub fn embed_input(&self, x: &SparseVector) -> Result<Vec<f64>, ModelError> {
        Ok(self.forward(x)?.out)
    }

    pub fn embed_label(&self, intent_index: usize) -> Result<Vec<f64>, ModelError> {
        self.check_label(intent_index)?;
        Ok(self.label_table.row(intent_index).to_vec())
    }

    /// Cosine of the input embedding against every label, in tag-index order.
    pub fn scores(&self, x: &SparseVector) -> Result<Vec<f64>, ModelError> {
        let out = self.embed_input(x)?;
        Ok((0..self.num_labels()).map(|k| cosine_unchecked(&out, self.label_table.row(k))).collect())
    }

    fn check_loss_args(&self, x: &SparseVector, positive: usize, negatives: &[usize]) -> Result<(), ModelError> {
        self.check_input(x)?;
        self.check_label(positive)?;
        if negatives.is_empty() {
            return Err(ModelError::NoNegatives);
        }
        for &n in negatives {
            self.check_label(n)?;
            if n == positive {
                return Err(ModelError::NegativeIsPositive(n));
            }
        }
        Ok(())
    }

    /// `max(0, m⁺ − s⁺) + Σ max(0, s⁻ − m⁻)` over cosine similarities.
    pub fn loss(&self, x: &SparseVector, positive: usize, negatives: &[usize]) -> Result<f64, ModelError> {
        self.check_loss_args(x, positive, negatives)?;
        let out = self.embed_input(x)?;
        let hp = &self.hyperparams;
        let pos = hinge(hp.margin_pos - cosine_unchecked(&out, self.label_table.row(positive)));
        let neg: f64 = negatives
            .iter()
            .map(|&n| hinge(cosine_unchecked(&out, self.label_table.row(n)) - hp.margin_neg))
            .sum();
        Ok(pos + neg)
    }

    /// Loss and its analytic gradient with respect to every parameter group.
    pub fn loss_and_gradients(
        &self,
        x: &SparseVector,
        positive: usize,
        negatives: &[usize],
    ) -> Result<(f64, Gradients), ModelError> {
        self.check_loss_args(x, positive, negatives)?;
        let fwd = self.forward(x)?;
        let hp = &self.hyperparams;
        let (e, h) = (hp.dim_embed, hp.dim_hidden);

        let mut loss = 0.0;
        let mut d_out = vec![0.0; e];
        let mut label_rows = Vec::with_capacity(negatives.len() + 1);

        let mut term = |label: usize, sign: f64, margin: f64| {
            let (s, ga, gb) = cosine_grads(&fwd.out, self.label_table.row(label));
            // positive term: margin − s ; negative term: s − margin
            let violation = sign * (s - margin);
            if violation > 0.0 || violation.is_nan() {
                loss += violation;
                for (d, g) in d_out.iter_mut().zip(&ga) {
                    *d += sign * g;
                }
                label_rows.push((label, gb.into_iter().map(|g| sign * g).collect::<Vec<_>>()));
            } else {
                label_rows.push((label, vec![0.0; e]));
            }
        };
        term(positive, -1.0, hp.margin_pos);
        for &n in negatives {
            term(n, 1.0, hp.margin_neg);
        }

        let b2 = d_out.clone();
        let mut w2 = Matrix::zeros(e, h);
        for (r, &d) in d_out.iter().enumerate() {
            for (g, &a) in w2.row_mut(r).iter_mut().zip(&fwd.h1) {
                *g = d * a;
            }
        }
        let d_h1 = self.w2.mul_vec_t(&d_out);
        let d_z1: Vec<f64> = d_h1.iter().zip(&fwd.z1).map(|(&g, &z)| if z > 0.0 { g } else { 0.0 }).collect();
        let b1 = d_z1.clone();
        let mut w1 = Matrix::zeros(h, h);
        for (r, &d) in d_z1.iter().enumerate() {
            for (g, &a) in w1.row_mut(r).iter_mut().zip(&fwd.h0) {
                *g = d * a;
            }
        }
        let d_h0 = self.w1.mul_vec_t(&d_z1);
        let gram_rows = x.pairs().iter().map(|&(i, c)| (i, d_h0.iter().map(|g| c * g).collect())).collect();

        Ok((loss, Gradients { gram_rows, w1, b1, w2, b2, label_rows }))
    }

    /// `param -= lr * (grad + l2 * param)` for every parameter the gradient touches.
    pub(crate) fn apply_sgd(&mut self, grads: &Gradients, lr: f64, l2: f64) {
        fn step(params: &mut [f64], grad: &[f64], lr: f64, l2: f64) {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= lr * (g + l2 * *p);
            }
        }
        for (i, g) in &grads.gram_rows {
            step(self.gram_table.row_mut(*i), g, lr, l2);
        }
        step(&mut self.w1.data, &grads.w1.data, lr, l2);
        step(&mut self.b1, &grads.b1, lr, l2);
        step(&mut self.w2.data, &grads.w2.data, lr, l2);
        step(&mut self.b2, &grads.b2, lr, l2);
        for (k, g) in &grads.label_rows {
            step(self.label_table.row_mut(*k), g, lr, l2);
        }
    }

    pub fn all_finite(&self) -> bool {
        [&self.gram_table.data, &self.w1.data, &self.b1, &self.w2.data, &self.b2, &self.label_table.data]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}
