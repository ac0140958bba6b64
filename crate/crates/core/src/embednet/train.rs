use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingModel, Hyperparams, ModelError};
use crate::featurizer::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-example loss of each epoch, measured before each update.
    pub loss_per_epoch: Vec<f64>,
    pub final_train_accuracy: f64,
}

/// Draws `min(k, L − 1)` distinct labels uniformly, never `positive`.
fn sample_negatives(rng: &mut ChaCha8Rng, num_labels: usize, positive: usize, k: usize) -> Vec<usize> {
    let pool = num_labels - 1;
    index::sample(rng, pool, k.min(pool))
        .into_iter()
        .map(|i| if i >= positive { i + 1 } else { i })
        .collect()
}

/// Plain SGD with batch size 1.
///
/// `hp` overrides the model's stored hyperparameters (and is stored back into
/// the returned model). Example order and negatives come from one ChaCha
/// stream seeded by `hp.rng_seed`, so a fixed seed gives bit-identical weights.
/// Weight decay is applied lazily: only to rows that take part in a step.
pub fn train(
    mut model: EmbeddingModel,
    examples: &[(SparseVector, usize)],
    hp: &Hyperparams,
) -> Result<(EmbeddingModel, TrainReport), ModelError> {
    hp.validate()?;
    if hp.dim_embed != model.hyperparams.dim_embed || hp.dim_hidden != model.hyperparams.dim_hidden {
        return Err(ModelError::BadHyperparams("dimensions differ from the initialized model".into()));
    }
    let labels = model.num_labels();
    if labels < 2 {
        return Err(ModelError::TooFewIntents(labels));
    }
    for (x, y) in examples {
        model.check_input(x)?;
        model.check_label(*y)?;
    }
    model.hyperparams = hp.clone();

    // Offset the stream so it does not replay the initialization draws.
    let mut rng = ChaCha8Rng::seed_from_u64(hp.rng_seed ^ 0x5eed_7a1e_d00d_f00d);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut loss_per_epoch = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, &i) in order.iter().enumerate() {
            let (x, y) = &examples[i];
            let negatives = sample_negatives(&mut rng, labels, *y, hp.negatives_per_example);
            let (loss, grads) = model.loss_and_gradients(x, *y, &negatives)?;
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, step, label: *y });
            }
            total += loss;
            model.apply_sgd(&grads, hp.learning_rate, hp.l2);
        }
        let mean = if examples.is_empty() { 0.0 } else { total / examples.len() as f64 };
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        loss_per_epoch.push(mean);
    }

    if !model.all_finite() {
        return Err(ModelError::NonFiniteLoss { epoch: hp.epochs, step: 0, label: 0 });
    }
    let final_train_accuracy = accuracy(&model, examples)?;
    Ok((model, TrainReport { loss_per_epoch, final_train_accuracy }))
}

/// Fraction of examples whose highest-scoring label (ties to the lower index) is the true one.
pub(crate) fn accuracy(model: &EmbeddingModel, examples: &[(SparseVector, usize)]) -> Result<f64, ModelError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (x, y) in examples {
        let scores = model.scores(x)?;
        let best = scores
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &s)| if s > best.1 { (k, s) } else { best })
            .0;
        if best == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}
