//! Text cleaning and sparse dual-context character n-gram features.
//!
//! Titles and bodies get independent vocabularies whose index ranges are
//! concatenated, so the same n-gram carries separate weights depending on
//! where it occurred. Feature weights are L2-normalized raw counts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::LabeledExample;
use crate::error::{Error, Result};

/// Sparse feature vector: (index, weight) entries strictly ascending by
/// index, zero weights never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
    dimension: usize,
}

impl SparseVector {
    pub fn new(entries: Vec<(usize, f64)>, dimension: usize) -> Result<Self> {
        let mut last: Option<usize> = None;
        for &(idx, w) in &entries {
            if idx >= dimension {
                return Err(Error::InvalidInput(format!(
                    "feature index {idx} out of range for dimension {dimension}"
                )));
            }
            if let Some(prev) = last {
                if idx <= prev {
                    return Err(Error::InvalidInput("entries not strictly ascending".into()));
                }
            }
            if w == 0.0 {
                return Err(Error::InvalidInput("zero weight stored".into()));
            }
            last = Some(idx);
        }
        Ok(SparseVector { entries, dimension })
    }

    pub fn zero(dimension: usize) -> Self {
        SparseVector { entries: Vec::new(), dimension }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.entries.binary_search_by_key(&index, |e| e.0) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut sum = 0.0;
        while i < self.entries.len() && j < other.entries.len() {
            let (a, wa) = self.entries[i];
            let (b, wb) = other.entries[j];
            match a.cmp(&b) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += wa * wb;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    /// Euclidean distance; both vectors must share a dimension.
    pub fn euclidean_distance(&self, other: &SparseVector) -> f64 {
        let d2 = self.l2_norm().powi(2) + other.l2_norm().powi(2) - 2.0 * self.dot(other);
        d2.max(0.0).sqrt()
    }

    pub fn cosine_similarity(&self, other: &SparseVector) -> f64 {
        let denom = self.l2_norm() * other.l2_norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }

    fn l2_normalized(mut self) -> Self {
        let norm = self.l2_norm();
        if norm > 0.0 {
            for e in &mut self.entries {
                e.1 /= norm;
            }
        }
        self
    }
}

/// Lowercase, strip non-alphanumerics to spaces, split, drop stop words.
pub fn clean_text(raw: &str, stop_words: &BTreeSet<String>) -> Vec<String> {
    let cleaned: String = raw
        .chars()
        .flat_map(|c| c.to_lowercase())
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|w| !stop_words.contains(*w))
        .map(|w| w.to_string())
        .collect()
}

/// All contiguous substrings of lengths `n_min..=n_max` within a word.
/// Words shorter than `n_min` yield the whole word as a single gram, so
/// short tokens are never silently dropped.
pub fn char_ngrams(word: &str, n_min: usize, n_max: usize) -> Vec<String> {
    assert!(n_min >= 1 && n_min <= n_max, "invalid n-gram range");
    let chars: Vec<char> = word.chars().collect();
    if chars.len() < n_min {
        return vec![word.to_string()];
    }
    let mut grams = Vec::new();
    for n in n_min..=n_max.min(chars.len()) {
        for window in chars.windows(n) {
            grams.push(window.iter().collect());
        }
    }
    grams
}

/// Dual-context n-gram vocabulary with disjoint title and body index ranges.
///
/// Title indices occupy `[0, title_vocab.len())`, body indices
/// `[title_vocab.len(), dimension)`. Index assignment is lexicographic over
/// grams, so rebuilding from the same corpus is bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub n_min: usize,
    pub n_max: usize,
    title_vocab: BTreeMap<String, usize>,
    body_vocab: BTreeMap<String, usize>,
    dimension: usize,
    stop_words: BTreeSet<String>,
}

impl FeatureSpace {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn title_vocab(&self) -> &BTreeMap<String, usize> {
        &self.title_vocab
    }

    pub fn body_vocab(&self) -> &BTreeMap<String, usize> {
        &self.body_vocab
    }

    pub fn stop_words(&self) -> &BTreeSet<String> {
        &self.stop_words
    }

    /// Grams (title-context and body-context pooled) known to this space.
    pub fn gram_set(&self) -> BTreeSet<&str> {
        self.title_vocab
            .keys()
            .chain(self.body_vocab.keys())
            .map(|s| s.as_str())
            .collect()
    }
}

fn grams_of_text(text: &str, n_min: usize, n_max: usize, stop_words: &BTreeSet<String>) -> Vec<String> {
    clean_text(text, stop_words)
        .iter()
        .flat_map(|w| char_ngrams(w, n_min, n_max))
        .collect()
}

/// Build title and body vocabularies from a corpus, keeping grams whose
/// document frequency in the respective context is at least `min_df`.
pub fn build_feature_space(
    corpus: &[LabeledExample],
    n_min: usize,
    n_max: usize,
    stop_words: &BTreeSet<String>,
    min_df: usize,
) -> Result<FeatureSpace> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("corpus is empty".into()));
    }
    let mut title_df: HashMap<String, usize> = HashMap::new();
    let mut body_df: HashMap<String, usize> = HashMap::new();
    for ex in corpus {
        let title_grams: BTreeSet<String> =
            grams_of_text(&ex.title_text, n_min, n_max, stop_words).into_iter().collect();
        for g in title_grams {
            *title_df.entry(g).or_insert(0) += 1;
        }
        let body_grams: BTreeSet<String> =
            grams_of_text(&ex.body_text, n_min, n_max, stop_words).into_iter().collect();
        for g in body_grams {
            *body_df.entry(g).or_insert(0) += 1;
        }
    }

    let kept_title: BTreeSet<String> = title_df
        .into_iter()
        .filter(|(_, df)| *df >= min_df)
        .map(|(g, _)| g)
        .collect();
    let kept_body: BTreeSet<String> = body_df
        .into_iter()
        .filter(|(_, df)| *df >= min_df)
        .map(|(g, _)| g)
        .collect();

    if kept_title.is_empty() && kept_body.is_empty() {
        return Err(Error::InvalidInput(format!(
            "corpus produced zero features at min_df {min_df}"
        )));
    }

    let title_vocab: BTreeMap<String, usize> = kept_title
        .into_iter()
        .enumerate()
        .map(|(i, g)| (g, i))
        .collect();
    let offset = title_vocab.len();
    let body_vocab: BTreeMap<String, usize> = kept_body
        .into_iter()
        .enumerate()
        .map(|(i, g)| (g, offset + i))
        .collect();
    let dimension = title_vocab.len() + body_vocab.len();

    Ok(FeatureSpace {
        n_min,
        n_max,
        title_vocab,
        body_vocab,
        dimension,
        stop_words: stop_words.clone(),
    })
}

/// Count known grams per context and L2-normalize the concatenated vector.
/// Unknown grams are ignored; a fully unknown example maps to the zero vector.
pub fn vectorize(example: &LabeledExample, space: &FeatureSpace) -> SparseVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for gram in grams_of_text(&example.title_text, space.n_min, space.n_max, &space.stop_words) {
        if let Some(&idx) = space.title_vocab.get(&gram) {
            *counts.entry(idx).or_insert(0.0) += 1.0;
        }
    }
    for gram in grams_of_text(&example.body_text, space.n_min, space.n_max, &space.stop_words) {
        if let Some(&idx) = space.body_vocab.get(&gram) {
            *counts.entry(idx).or_insert(0.0) += 1.0;
        }
    }
    let entries: Vec<(usize, f64)> = counts.into_iter().collect();
    SparseVector { entries, dimension: space.dimension() }.l2_normalized()
}

/// Which of the two co-training views a word feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum View {
    A,
    B,
}

/// Disjoint word partition inducing two independent n-gram feature views.
///
/// Corpus words are shuffled by a seeded PRNG and dealt alternately to the
/// two views; words unseen at split time fall back to a seeded hash parity
/// so fresh text still routes every word to exactly one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSplit {
    pub seed: u64,
    word_to_view: BTreeMap<String, View>,
    view_a_space: FeatureSpace,
    view_b_space: FeatureSpace,
}

impl ViewSplit {
    pub fn word_to_view(&self) -> &BTreeMap<String, View> {
        &self.word_to_view
    }

    pub fn space(&self, view: View) -> &FeatureSpace {
        match view {
            View::A => &self.view_a_space,
            View::B => &self.view_b_space,
        }
    }

    pub fn view_of(&self, word: &str) -> View {
        if let Some(v) = self.word_to_view.get(word) {
            return *v;
        }
        // FNV-1a over the word bytes, salted with the split seed.
        let mut h: u64 = 0xcbf29ce484222325 ^ self.seed;
        for b in word.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100000001b3);
        }
        if h & 1 == 0 {
            View::A
        } else {
            View::B
        }
    }

    fn filter_example(&self, example: &LabeledExample, view: View) -> LabeledExample {
        let space = self.space(view);
        let keep = |text: &str| -> String {
            clean_text(text, &space.stop_words)
                .into_iter()
                .filter(|w| self.view_of(w) == view)
                .collect::<Vec<_>>()
                .join(" ")
        };
        LabeledExample {
            source_site: example.source_site.clone(),
            title_text: keep(&example.title_text),
            body_text: keep(&example.body_text),
            label: example.label,
        }
    }

    /// Vectorize an example under one view: words assigned to the other view
    /// are dropped before n-gram extraction.
    pub fn vectorize(&self, example: &LabeledExample, view: View) -> SparseVector {
        vectorize(&self.filter_example(example, view), self.space(view))
    }
}

/// Partition the corpus word universe into two views and build a feature
/// space per view. Deterministic given the seed.
pub fn split_views(
    corpus: &[LabeledExample],
    n_min: usize,
    n_max: usize,
    stop_words: &BTreeSet<String>,
    min_df: usize,
    seed: u64,
) -> Result<ViewSplit> {
    let mut universe: BTreeSet<String> = BTreeSet::new();
    for ex in corpus {
        universe.extend(clean_text(&ex.title_text, stop_words));
        universe.extend(clean_text(&ex.body_text, stop_words));
    }
    if universe.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "corpus has {} distinct words; at least 2 required to split views",
            universe.len()
        )));
    }

    let mut words: Vec<String> = universe.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    words.shuffle(&mut rng);
    let word_to_view: BTreeMap<String, View> = words
        .into_iter()
        .enumerate()
        .map(|(i, w)| (w, if i % 2 == 0 { View::A } else { View::B }))
        .collect();

    let filter_corpus = |view: View| -> Vec<LabeledExample> {
        corpus
            .iter()
            .map(|ex| {
                let keep = |text: &str| -> String {
                    clean_text(text, stop_words)
                        .into_iter()
                        .filter(|w| word_to_view.get(w) == Some(&view))
                        .collect::<Vec<_>>()
                        .join(" ")
                };
                LabeledExample {
                    source_site: ex.source_site.clone(),
                    title_text: keep(&ex.title_text),
                    body_text: keep(&ex.body_text),
                    label: ex.label,
                }
            })
            .collect()
    };

    let build_view = |view: View, name: &str| -> Result<FeatureSpace> {
        build_feature_space(&filter_corpus(view), n_min, n_max, stop_words, min_df).map_err(|_| {
            Error::InvalidInput(format!(
                "view {name} has zero features at min_df {min_df}; try a lower min_df"
            ))
        })
    };
    let view_a_space = build_view(View::A, "A")?;
    let view_b_space = build_view(View::B, "B")?;

    Ok(ViewSplit { seed, word_to_view, view_a_space, view_b_space })
}

/// Bundle of the text-pipeline knobs that travel together through trainers
/// and the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct TextParams {
    pub n_min: usize,
    pub n_max: usize,
    pub min_df: usize,
    pub stop_words: BTreeSet<String>,
}

impl Default for TextParams {
    fn default() -> Self {
        TextParams { n_min: 3, n_max: 7, min_df: 2, stop_words: default_stop_words() }
    }
}

/// English stop words shipped with the artifact, one per line.
pub fn default_stop_words() -> BTreeSet<String> {
    parse_stop_words(include_str!("../assets/stopwords_en.txt"))
}

pub fn load_stop_words(path: impl AsRef<Path>) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(parse_stop_words(&text))
}

fn parse_stop_words(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

const FEATURE_SPACE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct VersionedSpace {
    version: u32,
    space: FeatureSpace,
}

/// Persist the space so train and predict runs share indices bit-exactly.
pub fn save_feature_space(space: &FeatureSpace, path: impl AsRef<Path>) -> Result<()> {
    let wrapped = VersionedSpace { version: FEATURE_SPACE_VERSION, space: space.clone() };
    let json = serde_json::to_string(&wrapped)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    std::fs::write(path.as_ref(), json).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn load_feature_space(path: impl AsRef<Path>) -> Result<FeatureSpace> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    let wrapped: VersionedSpace = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("bad feature space file: {e}")))?;
    if wrapped.version != FEATURE_SPACE_VERSION {
        return Err(Error::VersionMismatch {
            expected: FEATURE_SPACE_VERSION,
            found: wrapped.version,
        });
    }
    Ok(wrapped.space)
}

const VIEW_SPLIT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct VersionedSplit {
    version: u32,
    split: ViewSplit,
}

pub fn save_view_split(split: &ViewSplit, path: impl AsRef<Path>) -> Result<()> {
    let wrapped = VersionedSplit { version: VIEW_SPLIT_VERSION, split: split.clone() };
    let json = serde_json::to_string(&wrapped)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    std::fs::write(path.as_ref(), json).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn load_view_split(path: impl AsRef<Path>) -> Result<ViewSplit> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    let wrapped: VersionedSplit = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("bad view split file: {e}")))?;
    if wrapped.version != VIEW_SPLIT_VERSION {
        return Err(Error::VersionMismatch { expected: VIEW_SPLIT_VERSION, found: wrapped.version });
    }
    Ok(wrapped.split)
}
