//! Character n-gram features.
//!
//! A "character" is a Unicode scalar value. Whitespace is kept inside grams, so
//! word boundaries show up as grams such as `"i k"`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::LabeledExample;

pub const DEFAULT_N_MIN: usize = 2;
pub const DEFAULT_N_MAX: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("invalid n-gram range [{n_min}, {n_max}]")]
    BadRange { n_min: usize, n_max: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("vocabulary has no n-grams")]
    EmptyVocabulary,
}

/// Options for [`normalize_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizeOptions {
    /// Drop Arabic harakat (tanwin, short vowels, shadda, sukun, dagger alef).
    pub strip_arabic_diacritics: bool,
    /// Map Arabic-Indic and Extended Arabic-Indic digits to ASCII.
    pub ascii_digits: bool,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        Self { strip_arabic_diacritics: true, ascii_digits: true }
    }
}

fn is_harakah(c: char) -> bool {
    // U+0653..U+0655 (maddah, hamza above/below) compose under NFC and are kept.
    matches!(c, '\u{064B}'..='\u{0652}' | '\u{0670}')
}

fn ascii_digit(c: char) -> Option<char> {
    let base = match c {
        '\u{0660}'..='\u{0669}' => 0x0660,
        '\u{06F0}'..='\u{06F9}' => 0x06F0,
        _ => return None,
    };
    char::from_digit(c as u32 - base, 10)
}

pub fn normalize(text: &str) -> String {
    normalize_with(text, NormalizeOptions::default())
}

/// NFC, lowercase, Arabic cleanup, control removal, whitespace collapse.
/// Idempotent: the pipeline is applied until it reaches a fixed point.
pub fn normalize_with(text: &str, opts: NormalizeOptions) -> String {
    let mut current = normalize_once(text, opts);
    loop {
        let next = normalize_once(&current, opts);
        if next == current {
            return current;
        }
        current = next;
    }
}

fn normalize_once(text: &str, opts: NormalizeOptions) -> String {
    let lowered: String = text.nfc().flat_map(char::to_lowercase).collect();
    let mut out = String::with_capacity(lowered.len());
    let mut pending_space = false;
    for c in lowered.nfc() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if c.is_control() || (opts.strip_arabic_diacritics && is_harakah(c)) {
            continue;
        }
        let c = if opts.ascii_digits { ascii_digit(c).unwrap_or(c) } else { c };
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(c);
    }
    out.nfc().collect()
}

/// Multiset of character n-grams.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureBag {
    grams: BTreeMap<String, u32>,
}

impl FeatureBag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, gram: impl Into<String>, count: u32) {
        if count > 0 {
            *self.grams.entry(gram.into()).or_default() += count;
        }
    }

    pub fn count(&self, gram: &str) -> u32 {
        self.grams.get(gram).copied().unwrap_or(0)
    }

    /// Number of distinct grams.
    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    /// Total number of gram occurrences.
    pub fn mass(&self) -> u64 {
        self.grams.values().map(|&c| u64::from(c)).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.grams.iter().map(|(g, &c)| (g.as_str(), c))
    }
}

/// All contiguous substrings of `n_min..=n_max` scalar values, with multiplicity.
pub fn char_ngrams(text: &str, n_min: usize, n_max: usize) -> Result<FeatureBag, FeatureError> {
    if n_min < 1 || n_min > n_max {
        return Err(FeatureError::BadRange { n_min, n_max });
    }
    let chars: Vec<char> = text.chars().collect();
    let mut bag = FeatureBag::new();
    for n in n_min..=n_max.min(chars.len()) {
        for window in chars.windows(n) {
            bag.add(window.iter().collect::<String>(), 1);
        }
    }
    Ok(bag)
}

/// Gram and tag indexes built from training data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Grams in index order.
    grams: Vec<String>,
    /// Intent ids in index order.
    tags: Vec<String>,
    n_min: usize,
    n_max: usize,
    normalize: NormalizeOptions,
    #[serde(skip)]
    gram_index: HashMap<String, usize>,
    #[serde(skip)]
    tag_index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_parts(
        grams: Vec<String>,
        tags: Vec<String>,
        n_min: usize,
        n_max: usize,
        normalize: NormalizeOptions,
    ) -> Self {
        let mut v = Self {
            grams,
            tags,
            n_min,
            n_max,
            normalize,
            gram_index: HashMap::new(),
            tag_index: HashMap::new(),
        };
        v.reindex();
        v
    }

    /// Rebuilds lookup maps after deserialization.
    pub(crate) fn reindex(&mut self) {
        self.gram_index = self.grams.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();
        self.tag_index = self.tags.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn num_grams(&self) -> usize {
        self.grams.len()
    }

    pub fn num_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn gram_index(&self, gram: &str) -> Option<usize> {
        self.gram_index.get(gram).copied()
    }

    pub fn tag_index(&self, intent_id: &str) -> Option<usize> {
        self.tag_index.get(intent_id).copied()
    }

    pub fn gram(&self, index: usize) -> Option<&str> {
        self.grams.get(index).map(String::as_str)
    }

    pub fn tag(&self, index: usize) -> Option<&str> {
        self.tags.get(index).map(String::as_str)
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn ngram_range(&self) -> (usize, usize) {
        (self.n_min, self.n_max)
    }

    pub fn normalize_options(&self) -> NormalizeOptions {
        self.normalize
    }

    /// normalize → char_ngrams → encode, with this vocabulary's settings.
    pub fn featurize(&self, text: &str) -> Result<SparseVector, FeatureError> {
        let bag = char_ngrams(&normalize_with(text, self.normalize), self.n_min, self.n_max)?;
        encode(&bag, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabularyConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub min_count: u32,
    pub normalize: NormalizeOptions,
}

impl Default for VocabularyConfig {
    fn default() -> Self {
        Self { n_min: DEFAULT_N_MIN, n_max: DEFAULT_N_MAX, min_count: 1, normalize: NormalizeOptions::default() }
    }
}

/// Builds the vocabulary with default settings and the given `min_count`.
pub fn build_vocabulary(train: &[LabeledExample], min_count: u32) -> Result<Vocabulary, FeatureError> {
    build_vocabulary_with(train, VocabularyConfig { min_count, ..VocabularyConfig::default() })
}

/// Grams ordered by (count desc, gram asc); tags in first-appearance order.
pub fn build_vocabulary_with(train: &[LabeledExample], cfg: VocabularyConfig) -> Result<Vocabulary, FeatureError> {
    if train.is_empty() {
        return Err(FeatureError::EmptyTrainingSet);
    }
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    let mut tags: Vec<String> = Vec::new();
    for ex in train {
        let bag = char_ngrams(&normalize_with(&ex.text, cfg.normalize), cfg.n_min, cfg.n_max)?;
        for (g, c) in bag.iter() {
            *totals.entry(g.to_string()).or_default() += u64::from(c);
        }
        if !tags.contains(&ex.intent_id) {
            tags.push(ex.intent_id.clone());
        }
    }
    let mut grams: Vec<(String, u64)> =
        totals.into_iter().filter(|(_, c)| *c >= u64::from(cfg.min_count)).collect();
    grams.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_parts(
        grams.into_iter().map(|(g, _)| g).collect(),
        tags,
        cfg.n_min,
        cfg.n_max,
        cfg.normalize,
    ))
}

/// Sparse count vector over the gram vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    pairs: Vec<(usize, f64)>,
    dimension: usize,
}

impl SparseVector {
    /// Sorts and merges `pairs`; drops non-positive values.
    pub fn new(mut pairs: Vec<(usize, f64)>, dimension: usize) -> Self {
        pairs.retain(|&(i, v)| v > 0.0 && i < dimension);
        pairs.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match merged.last_mut() {
                Some((j, w)) if *j == i => *w += v,
                _ => merged.push((i, v)),
            }
        }
        Self { pairs: merged, dimension }
    }

    pub fn empty(dimension: usize) -> Self {
        Self { pairs: Vec::new(), dimension }
    }

    pub fn pairs(&self) -> &[(usize, f64)] {
        &self.pairs
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.pairs.iter().map(|&(i, v)| (i, v * factor)).collect(), self.dimension)
    }
}

/// Out-of-vocabulary grams are dropped.
pub fn encode(bag: &FeatureBag, vocab: &Vocabulary) -> Result<SparseVector, FeatureError> {
    if vocab.num_grams() == 0 {
        return Err(FeatureError::EmptyVocabulary);
    }
    let pairs = bag
        .iter()
        .filter_map(|(g, c)| vocab.gram_index(g).map(|i| (i, f64::from(c))))
        .collect();
    Ok(SparseVector::new(pairs, vocab.num_grams()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bag_of(pairs: &[(&str, u32)]) -> FeatureBag {
        let mut b = FeatureBag::new();
        for &(g, c) in pairs {
            b.add(g, c);
        }
        b
    }

    #[test]
    fn normalize_tunizi_greeting() {
        assert_eq!(normalize("  3assLAMA  "), "3asslama");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn normalize_collapses_whitespace_and_controls() {
        assert_eq!(normalize("how \t r\n\n  u\u{0007}?"), "how r u?");
        assert_eq!(normalize("\u{0000}\u{001b}"), "");
    }

    #[test]
    fn normalize_arabic() {
        // kasra and tanwin fath removed, Arabic-Indic digits mapped
        assert_eq!(normalize("كِيفَ ١٩"), "كيف 19");
        assert_eq!(normalize("جيدًا"), "جيدا");
        let keep = NormalizeOptions { strip_arabic_diacritics: false, ascii_digits: false };
        assert_eq!(normalize_with("كِيف ١٩", keep), "كِيف ١٩");
    }

    #[test]
    fn normalize_composes_nfc() {
        assert_eq!(normalize("Me\u{0301}me"), "m\u{e9}me");
    }

    #[test]
    fn ngrams_of_behi() {
        let bag = char_ngrams("behi", 2, 4).unwrap();
        let expected = bag_of(&[("be", 1), ("eh", 1), ("hi", 1), ("beh", 1), ("ehi", 1), ("behi", 1)]);
        assert_eq!(bag, expected);
        assert_eq!(bag.mass(), 6);
    }

    #[test]
    fn ngrams_short_and_repeated() {
        assert!(char_ngrams("a", 2, 4).unwrap().is_empty());
        assert_eq!(char_ngrams("aaa", 2, 2).unwrap(), bag_of(&[("aa", 2)]));
        assert_eq!(char_ngrams("a b", 2, 2).unwrap(), bag_of(&[("a ", 1), (" b", 1)]));
    }

    #[test]
    fn ngrams_count_scalars_not_bytes() {
        let bag = char_ngrams("صباح", 2, 4).unwrap();
        assert_eq!(bag.mass(), 3 + 2 + 1);
        assert_eq!(bag.count("صب"), 1);
    }

    #[test]
    fn ngram_range_errors() {
        assert_eq!(char_ngrams("abc", 0, 2), Err(FeatureError::BadRange { n_min: 0, n_max: 2 }));
        assert_eq!(char_ngrams("abc", 3, 2), Err(FeatureError::BadRange { n_min: 3, n_max: 2 }));
    }

    #[test]
    fn vocabulary_from_behi() {
        let train = vec![LabeledExample::new("behi", "good")];
        let v = build_vocabulary(&train, 1).unwrap();
        assert_eq!(v.num_grams(), 6);
        assert_eq!(v.num_tags(), 1);
        // all counts 1, so lexicographic order
        assert_eq!(v.gram(0), Some("be"));
        assert_eq!(v.gram(1), Some("beh"));
    }

    #[test]
    fn vocabulary_tags_first_appearance() {
        let train = vec![
            LabeledExample::new("salut", "greet"),
            LabeledExample::new("bonjour", "greet"),
            LabeledExample::new("merci", "thanks"),
        ];
        let v = build_vocabulary(&train, 1).unwrap();
        assert_eq!(v.tags(), &["greet".to_string(), "thanks".to_string()]);
        assert_eq!(v.tag_index("thanks"), Some(1));
    }

    #[test]
    fn vocabulary_orders_by_count() {
        let train = vec![LabeledExample::new("aaa", "x")];
        let v = build_vocabulary(&train, 1).unwrap();
        assert_eq!(v.gram(0), Some("aa"));
        assert_eq!(v.gram(1), Some("aaa"));
    }

    #[test]
    fn vocabulary_errors() {
        assert_eq!(build_vocabulary(&[], 1), Err(FeatureError::EmptyTrainingSet));
        let v = build_vocabulary(&[LabeledExample::new("behi", "good")], 2).unwrap();
        assert_eq!(v.num_grams(), 0);
        assert_eq!(encode(&FeatureBag::new(), &v), Err(FeatureError::EmptyVocabulary));
    }

    #[test]
    fn encode_drops_oov() {
        let v = Vocabulary::from_parts(vec!["be".into()], vec!["t".into()], 2, 4, NormalizeOptions::default());
        let x = encode(&bag_of(&[("be", 1), ("zz", 1)]), &v).unwrap();
        assert_eq!(x.pairs(), &[(0, 1.0)]);
        let empty = encode(&FeatureBag::new(), &v).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.dimension(), 1);
    }

    #[test]
    fn encode_behi_against_own_vocab() {
        let v = build_vocabulary(&[LabeledExample::new("behi", "good")], 1).unwrap();
        let x = encode(&char_ngrams("behi", 2, 4).unwrap(), &v).unwrap();
        assert_eq!(x.pairs().len(), 6);
        assert!(x.pairs().iter().all(|&(_, c)| c == 1.0));
        assert!(x.pairs().windows(2).all(|w| w[0].0 < w[1].0));
    }

    fn mixed_text() -> impl Strategy<Value = String> {
        prop_oneof![
            any::<String>(),
            "[a-zA-Z0-9 ?!'-]{0,40}",
            "[\u{0600}-\u{06FF} ]{0,30}",
            "[a-z37 \u{0621}-\u{064A}\u{064B}-\u{0652}\u{0660}-\u{0669}\t\n]{0,40}",
        ]
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in mixed_text()) {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once.clone());
            prop_assert!(!once.chars().any(char::is_control));
            prop_assert!(!once.starts_with(' ') && !once.ends_with(' ') && !once.contains("  "));
        }

        #[test]
        fn bag_mass_law(s in any::<String>(), n_min in 1usize..4, extra in 0usize..3) {
            let n_max = n_min + extra;
            let m = s.chars().count();
            let bag = char_ngrams(&s, n_min, n_max).unwrap();
            let expected: usize = (n_min..=n_max).map(|n| (m + 1).saturating_sub(n)).sum();
            prop_assert_eq!(bag.mass(), expected as u64);
            for (g, c) in bag.iter() {
                let len = g.chars().count();
                prop_assert!(len >= n_min && len <= n_max && c >= 1);
            }
        }

        #[test]
        fn encode_is_monotone(words in proptest::collection::vec("[a-d]{2,4}", 1..6), extra in "[a-d]{2,4}") {
            let train: Vec<_> = words.iter().map(|w| LabeledExample::new(w.clone(), "t")).collect();
            let v = build_vocabulary(&train, 1).unwrap();
            let mut bag = FeatureBag::new();
            for w in &words { bag.add(w.clone(), 1); }
            let before = encode(&bag, &v).unwrap();
            bag.add(extra, 1);
            let after = encode(&bag, &v).unwrap();
            for &(i, c) in before.pairs() {
                let a = after.pairs().iter().find(|p| p.0 == i).map(|p| p.1).unwrap_or(0.0);
                prop_assert!(a >= c);
            }
        }
    }
}
