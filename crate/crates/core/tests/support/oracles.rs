//! Independent reference computations shared by the integration tests and
//! the acceptance suite.

#![allow(dead_code, clippy::needless_range_loop)]

use crisisbot::classifier::{calibrate_threshold, ClassifyError};
use crisisbot::corpus::LabeledExample;
use crisisbot::embednet::{init_model, train, EmbeddingModel, Hyperparams};
use crisisbot::featurizer::{build_vocabulary, char_ngrams, NormalizeOptions, SparseVector, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Σ_n max(0, m − n + 1) over n in n_min..=n_max.
pub fn expected_mass(chars: usize, n_min: usize, n_max: usize) -> u64 {
    (n_min..=n_max).map(|n| (chars + 1).saturating_sub(n) as u64).sum()
}

pub fn random_unicode_string(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(0..40);
    (0..len)
        .map(|_| loop {
            let c = match rng.gen_range(0..4) {
                0 => rng.gen_range(0x20u32..0x7f),
                1 => rng.gen_range(0x600u32..0x700),
                2 => rng.gen_range(0xa0u32..0x2000),
                _ => rng.gen_range(0u32..0x11_0000),
            };
            if let Some(ch) = char::from_u32(c) {
                break ch;
            }
        })
        .collect()
}

/// Number of strings whose 2..4-gram bag mass breaks the count law.
pub fn count_law_failures(samples: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .filter(|_| {
            let s = random_unicode_string(&mut rng);
            char_ngrams(&s, 2, 4).unwrap().mass() != expected_mass(s.chars().count(), 2, 4)
        })
        .count()
}

/// Loss with all hinge terms written out from scratch.
pub fn reference_loss(m: &EmbeddingModel, x: &SparseVector, pos: usize, negs: &[usize]) -> f64 {
    let h = m.hyperparams.dim_hidden;
    let e = m.hyperparams.dim_embed;
    let mut h0 = vec![0.0; h];
    for &(i, c) in x.pairs() {
        for j in 0..h {
            h0[j] += c * m.gram_table.data[i * h + j];
        }
    }
    let h1: Vec<f64> = (0..h)
        .map(|r| (m.b1[r] + (0..h).map(|c| m.w1.data[r * h + c] * h0[c]).sum::<f64>()).max(0.0))
        .collect();
    let out: Vec<f64> = (0..e).map(|r| m.b2[r] + (0..h).map(|c| m.w2.data[r * h + c] * h1[c]).sum::<f64>()).collect();
    let cos = |k: usize| {
        let l = &m.label_table.data[k * e..(k + 1) * e];
        let d: f64 = out.iter().zip(l).map(|(a, b)| a * b).sum();
        let na = out.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb = l.iter().map(|b| b * b).sum::<f64>().sqrt();
        d / (na * nb)
    };
    let hp = &m.hyperparams;
    (hp.margin_pos - cos(pos)).max(0.0) + negs.iter().map(|&k| (cos(k) - hp.margin_neg).max(0.0)).sum::<f64>()
}

/// Pre-activations of the hidden layer and every hinge violation, used to
/// keep finite differences away from kinks.
fn kink_distance(m: &EmbeddingModel, x: &SparseVector, pos: usize, negs: &[usize]) -> f64 {
    let fwd = m.forward(x).unwrap();
    let scores = m.scores(x).unwrap();
    let hp = &m.hyperparams;
    let mut d = fwd.z1.iter().map(|z| z.abs()).fold(f64::INFINITY, f64::min);
    d = d.min((hp.margin_pos - scores[pos]).abs());
    for &k in negs {
        d = d.min((scores[k] - hp.margin_neg).abs());
    }
    d
}

pub struct GradientCheck {
    pub max_relative_error: f64,
    pub parameters_checked: usize,
}

/// Tiny model: |V| = 10, L = 3, hidden 8, embed 4. Compares the analytic
/// gradient of every parameter with a central difference (step 1e-4).
pub fn gradient_check(seed: u64) -> GradientCheck {
    let grams: Vec<String> = (0..10).map(|i| format!("g{i}")).collect();
    let tags: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let vocab = Vocabulary::from_parts(grams, tags, 2, 4, NormalizeOptions::default());
    let hp = Hyperparams { dim_embed: 4, dim_hidden: 8, margin_pos: 0.95, margin_neg: -0.95, ..Hyperparams::default() };
    let (pos, negs) = (0usize, [1usize, 2]);
    let step = 1e-4;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (model, x) = loop {
        let hp = Hyperparams { rng_seed: rng.gen(), ..hp.clone() };
        let model = init_model(vocab.clone(), hp).unwrap();
        let mut pairs = Vec::new();
        for i in 0..10 {
            if rng.gen_bool(0.6) {
                pairs.push((i, rng.gen_range(1..4) as f64));
            }
        }
        let x = SparseVector::new(pairs, 10);
        if !x.is_empty() && kink_distance(&model, &x, pos, &negs) > 1e-2 {
            break (model, x);
        }
    };

    let (loss, g) = model.loss_and_gradients(&x, pos, &negs).unwrap();
    assert!((loss - reference_loss(&model, &x, pos, &negs)).abs() < 1e-12);

    // Densify the sparse row gradients.
    let (h, e) = (8, 4);
    let mut gram = vec![0.0; 10 * h];
    for (i, row) in &g.gram_rows {
        gram[i * h..(i + 1) * h].copy_from_slice(row);
    }
    let mut label = vec![0.0; 3 * e];
    for (k, row) in &g.label_rows {
        for (dst, v) in label[k * e..(k + 1) * e].iter_mut().zip(row) {
            *dst += v;
        }
    }
    type Access = fn(&mut EmbeddingModel) -> &mut Vec<f64>;
    let groups: [(Access, Vec<f64>); 6] = [
        (|m| &mut m.gram_table.data, gram),
        (|m| &mut m.w1.data, g.w1.data.clone()),
        (|m| &mut m.b1, g.b1.clone()),
        (|m| &mut m.w2.data, g.w2.data.clone()),
        (|m| &mut m.b2, g.b2.clone()),
        (|m| &mut m.label_table.data, label),
    ];

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (access, analytic) in groups {
        for (idx, &a) in analytic.iter().enumerate() {
            let mut plus = model.clone();
            access(&mut plus)[idx] += step;
            let mut minus = model.clone();
            access(&mut minus)[idx] -= step;
            let numeric =
                (reference_loss(&plus, &x, pos, &negs) - reference_loss(&minus, &x, pos, &negs)) / (2.0 * step);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    GradientCheck { max_relative_error: worst, parameters_checked: checked }
}

/// Top-1 by cosine, ties to the lower index, computed without the classifier.
fn reference_top(m: &EmbeddingModel, text: &str) -> (usize, f64) {
    let scores = m.scores(&m.vocab.featurize(text).unwrap()).unwrap();
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    (best, scores[best])
}

const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "ta", "ru", "se", "ba", "no", "qi", "zu", "he", "wa"];

fn random_phrase(rng: &mut ChaCha8Rng, stem: &[usize]) -> String {
    let mut words: Vec<String> = stem.iter().map(|&s| SYLLABLES[s].repeat(2)).collect();
    for _ in 0..rng.gen_range(0..3) {
        words.push(SYLLABLES[rng.gen_range(0..SYLLABLES.len())].to_string());
    }
    words.join(" ")
}

pub struct ThresholdFixtureOutcome {
    pub fixtures: usize,
    pub formula_mismatches: usize,
    pub violations: usize,
    pub uncalibratable: usize,
}

/// Random small intent sets, briefly trained models, random validation
/// sets. Checks the threshold against an independent min-over-correct and
/// counts correct examples that would fall below it.
pub fn threshold_fixtures(n: usize, seed: u64) -> ThresholdFixtureOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ThresholdFixtureOutcome { fixtures: n, formula_mismatches: 0, violations: 0, uncalibratable: 0 };
    for _ in 0..n {
        let intents = rng.gen_range(2..6);
        let stems: Vec<Vec<usize>> =
            (0..intents).map(|_| (0..2).map(|_| rng.gen_range(0..SYLLABLES.len())).collect()).collect();
        let make = |rng: &mut ChaCha8Rng, count: usize| -> Vec<LabeledExample> {
            (0..count)
                .map(|_| {
                    let k = rng.gen_range(0..intents);
                    LabeledExample::new(random_phrase(rng, &stems[k]), format!("intent{k}"))
                })
                .collect()
        };
        let mut train_set = make(&mut rng, 12);
        for k in 0..intents {
            train_set.push(LabeledExample::new(random_phrase(&mut rng, &stems[k]), format!("intent{k}")));
        }
        let n_val = rng.gen_range(1..15);
        let validation = make(&mut rng, n_val);

        let vocab = build_vocabulary(&train_set, 1).unwrap();
        let hp = Hyperparams {
            dim_hidden: 16,
            dim_embed: 8,
            epochs: rng.gen_range(0..6),
            rng_seed: rng.gen(),
            ..Hyperparams::default()
        };
        let model = init_model(vocab, hp.clone()).unwrap();
        let encoded: Vec<(SparseVector, usize)> = train_set
            .iter()
            .map(|ex| (model.vocab.featurize(&ex.text).unwrap(), model.vocab.tag_index(&ex.intent_id).unwrap()))
            .collect();
        let model = if hp.epochs > 0 { train(model, &encoded, &hp).unwrap().0 } else { model };

        let correct: Vec<f64> = validation
            .iter()
            .filter_map(|ex| {
                let (k, c) = reference_top(&model, &ex.text);
                (model.vocab.tag(k) == Some(ex.intent_id.as_str())).then_some(c)
            })
            .collect();
        let expected = correct.iter().copied().fold(f64::INFINITY, f64::min);
        match calibrate_threshold(&model, &validation) {
            Ok(report) => {
                if correct.is_empty() || report.threshold.to_bits() != expected.to_bits() {
                    out.formula_mismatches += 1;
                }
                out.violations += correct.iter().filter(|&&c| c < report.threshold).count();
            }
            Err(ClassifyError::Uncalibratable) if correct.is_empty() => out.uncalibratable += 1,
            Err(_) => out.formula_mismatches += 1,
        }
    }
    out
}
