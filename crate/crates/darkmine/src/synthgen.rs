//! Deterministic synthetic-corpus generator: ground-truth datasets that
//! stand in for the unavailable darknet data in tests and acceptance runs.
//!
//! Titles and descriptions are sampled from class-specific word pools, so a
//! bag-of-words rule on the uncorrupted corpus is Bayes-optimal. Seeded
//! character-level misspellings then degrade word-identity features the way
//! real marketplace text does.

use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datamodel::{
    save_products, save_topics, ForumPost, ForumTopic, Label, LabelAssignment, LabeledExample,
    MarketProduct,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n_sites: usize,
    pub products_per_site: usize,
    pub positive_rate: f64,
    pub vocab_relevant: Vec<String>,
    pub vocab_irrelevant: Vec<String>,
    pub misspell_rate: f64,
    /// Draw titles and descriptions from disjoint halves of each pool, so
    /// the two co-training views each carry class signal of their own.
    pub dual_view_mode: bool,
    /// Probability that a class word is drawn from the opposite class pool.
    /// Own-class words always keep a strict per-context majority, so the
    /// majority rule stays Bayes-optimal on the uncorrupted corpus.
    pub contamination: f64,
    /// Class-neutral filler words, shared by both classes.
    pub vocab_neutral: Vec<String>,
    /// Probability that a word position is neutral filler instead of a
    /// class word. Every context keeps at least one class word.
    pub neutral_rate: f64,
    /// Words per title, inclusive range.
    pub title_words: (usize, usize),
    /// Words per description, inclusive range.
    pub body_words: (usize, usize),
    /// Forum sites generated alongside the markets; 0 disables them.
    pub topics_per_site: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_sites: 10,
            products_per_site: 200,
            positive_rate: 0.13,
            vocab_relevant: default_relevant_pool(),
            vocab_irrelevant: default_irrelevant_pool(),
            misspell_rate: 0.1,
            dual_view_mode: false,
            contamination: 0.0,
            vocab_neutral: Vec::new(),
            neutral_rate: 0.0,
            title_words: (4, 8),
            body_words: (8, 20),
            topics_per_site: 0,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_sites == 0 || self.products_per_site == 0 {
            return Err(Error::InvalidInput("need at least one site and one product".into()));
        }
        if !(0.0..1.0).contains(&self.positive_rate) || self.positive_rate == 0.0 {
            return Err(Error::InvalidInput(format!(
                "positive_rate must be in (0, 1), got {}",
                self.positive_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.misspell_rate) {
            return Err(Error::InvalidInput(format!(
                "misspell_rate must be in [0, 1], got {}",
                self.misspell_rate
            )));
        }
        if !(0.0..0.5).contains(&self.contamination) {
            return Err(Error::InvalidInput(format!(
                "contamination must be in [0, 0.5), got {}",
                self.contamination
            )));
        }
        if !(0.0..1.0).contains(&self.neutral_rate) {
            return Err(Error::InvalidInput(format!(
                "neutral_rate must be in [0, 1), got {}",
                self.neutral_rate
            )));
        }
        if self.neutral_rate > 0.0 {
            let min_neutral = if self.dual_view_mode { 2 } else { 1 };
            if self.vocab_neutral.len() < min_neutral {
                return Err(Error::InvalidInput("neutral_rate set but vocab_neutral too small".into()));
            }
        }
        for word in &self.vocab_neutral {
            if self.vocab_relevant.contains(word) || self.vocab_irrelevant.contains(word) {
                return Err(Error::InvalidInput(format!(
                    "neutral pool overlaps a class pool on `{word}`"
                )));
            }
        }
        for (name, (lo, hi)) in [("title_words", self.title_words), ("body_words", self.body_words)] {
            if lo == 0 || lo > hi {
                return Err(Error::InvalidInput(format!("bad {name} range ({lo}, {hi})")));
            }
        }
        let min_pool = if self.dual_view_mode { 4 } else { 2 };
        if self.vocab_relevant.len() < min_pool || self.vocab_irrelevant.len() < min_pool {
            return Err(Error::InvalidInput("word pools too small".into()));
        }
        for word in &self.vocab_relevant {
            if self.vocab_irrelevant.contains(word) {
                return Err(Error::InvalidInput(format!("pools overlap on `{word}`")));
            }
        }
        Ok(())
    }
}

/// Morpheme-composed pseudo-word pools: each pool owns a disjoint morpheme
/// stock and its words are two-morpheme compositions, so unseen word forms
/// still share character n-grams with seen ones the way real word variants
/// do ("hack", "hacker", "hackz"). Deterministic per seed.
pub fn composition_pool_set(pools: usize, morphemes_per_pool: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stock: Vec<String> = Vec::new();
    while stock.len() < pools * morphemes_per_pool {
        let len = rng.gen_range(4..=5);
        let m: String = (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
        if !stock.contains(&m) {
            stock.push(m);
        }
    }
    stock
        .chunks(morphemes_per_pool)
        .map(|morphemes| {
            let mut words = Vec::with_capacity(morphemes.len() * morphemes.len());
            for a in morphemes {
                for b in morphemes {
                    words.push(format!("{a}{b}"));
                }
            }
            words
        })
        .collect()
}

/// Two-class convenience wrapper around `composition_pool_set`.
pub fn composition_pools(morphemes_per_class: usize, seed: u64) -> (Vec<String>, Vec<String>) {
    let mut set = composition_pool_set(2, morphemes_per_class, seed);
    let irr = set.pop().expect("two pools");
    let rel = set.pop().expect("two pools");
    (rel, irr)
}

pub fn default_relevant_pool() -> Vec<String> {
    [
        "exploit", "keylogger", "botnet", "rootkit", "malware", "trojan", "ransomware",
        "stealer", "crypter", "loader", "phishing", "spyware", "backdoor", "shellcode",
        "injector", "binder", "payload", "obfuscator", "bruteforcer", "cracker", "skimmer",
        "carding", "dumps", "fullz", "spoofer", "flooder", "banker", "grabber", "dropper",
        "webshell", "worm", "bootkit",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

pub fn default_irrelevant_pool() -> Vec<String> {
    [
        "cocaine", "cannabis", "heroin", "mdma", "ketamine", "marijuana", "hashish",
        "steroids", "xanax", "oxycodone", "adderall", "mushrooms", "watch", "jewelry",
        "passport", "counterfeit", "cigarettes", "tobacco", "silver", "gold", "designer",
        "handbag", "perfume", "electronics", "giftcard", "voucher", "ticket", "sneakers",
        "chocolate", "coffee", "honey", "vitamins",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

const VENDOR_POOL: &[&str] = &[
    "nightshade", "zeroclick", "ghostwire", "packetrat", "silkmason", "copperhead",
    "blackcat", "moonbroker",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSite {
    pub site_id: String,
    pub products: Vec<MarketProduct>,
    pub topics: Vec<ForumTopic>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub sites: Vec<SyntheticSite>,
    /// Ground-truth sidecar, keyed like a label file so it feeds
    /// `apply_labels` directly.
    pub truth: Vec<LabelAssignment>,
}

impl SyntheticCorpus {
    /// Classifier inputs with the ground-truth labels stamped on.
    pub fn labeled_examples(&self) -> Vec<LabeledExample> {
        let mut truth_iter = self.truth.iter();
        let mut examples = Vec::new();
        for site in &self.sites {
            for p in &site.products {
                let label = truth_iter.next().expect("one truth entry per record").label;
                examples.push(LabeledExample {
                    source_site: p.site_id.clone(),
                    title_text: p.item_title.clone(),
                    body_text: p.item_description.clone(),
                    label,
                });
            }
            for t in &site.topics {
                let label = truth_iter.next().expect("one truth entry per record").label;
                let body: Vec<&str> = t.posts.iter().map(|p| p.post_content.as_str()).collect();
                examples.push(LabeledExample {
                    source_site: t.site_id.clone(),
                    title_text: t.topic_content.clone(),
                    body_text: body.join(" "),
                    label,
                });
            }
        }
        examples
    }

    /// Per-site record files plus the ground-truth sidecar.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for site in &self.sites {
            if !site.products.is_empty() {
                save_products(&site.products, dir.join(format!("{}_products.ndjson", site.site_id)))?;
            }
            if !site.topics.is_empty() {
                save_topics(&site.topics, dir.join(format!("{}_topics.ndjson", site.site_id)))?;
            }
        }
        let mut out = String::new();
        for entry in &self.truth {
            out.push_str(&serde_json::to_string(entry).expect("truth entry serializes"));
            out.push('\n');
        }
        let truth_path = dir.join("ground_truth.ndjson");
        std::fs::write(&truth_path, out).map_err(|e| Error::io(&truth_path, e))
    }
}

fn base_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2016, 8, 1, 0, 0, 0).unwrap()
}

/// One seeded character-level edit: substitution, deletion, or duplication.
fn misspell(word: &str, rng: &mut ChaCha8Rng) -> String {
    let chars: Vec<char> = word.chars().collect();
    let pos = rng.gen_range(0..chars.len());
    let op = rng.gen_range(0..3u8);
    let mut out = chars.clone();
    match op {
        0 => out[pos] = rng.gen_range(b'a'..=b'z') as char,
        1 if chars.len() > 1 => {
            out.remove(pos);
        }
        _ => out.insert(pos, chars[pos]),
    }
    out.into_iter().collect()
}

/// Per-context word sources: the class's own pool slice, the opposite
/// class's slice for contaminated draws, and the neutral filler slice.
struct ContextPool<'a> {
    own: &'a [String],
    other: &'a [String],
    neutral: &'a [String],
}

fn context_pools<'a>(spec: &'a CorpusSpec, relevant: bool, body: bool) -> ContextPool<'a> {
    let (own_full, other_full) = if relevant {
        (&spec.vocab_relevant, &spec.vocab_irrelevant)
    } else {
        (&spec.vocab_irrelevant, &spec.vocab_relevant)
    };
    let slice = |pool: &'a [String]| -> &'a [String] {
        if spec.dual_view_mode {
            let half = pool.len() / 2;
            if body {
                &pool[half..]
            } else {
                &pool[..half]
            }
        } else {
            pool
        }
    };
    ContextPool {
        own: slice(own_full),
        other: slice(other_full),
        neutral: slice(&spec.vocab_neutral),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum WordSource {
    Own,
    Other,
    Neutral,
}

fn sample_context(
    pool: &ContextPool,
    count: usize,
    spec: &CorpusSpec,
    rng: &mut ChaCha8Rng,
) -> String {
    // Source flags are redrawn until at least one class word is present and
    // own-class words strictly outnumber contaminants, so the majority rule
    // stays exact on uncorrupted text.
    let flags: Vec<WordSource> = loop {
        let candidate: Vec<WordSource> = (0..count)
            .map(|_| {
                if spec.neutral_rate > 0.0 && rng.gen_bool(spec.neutral_rate) {
                    WordSource::Neutral
                } else if spec.contamination > 0.0 && rng.gen_bool(spec.contamination) {
                    WordSource::Other
                } else {
                    WordSource::Own
                }
            })
            .collect();
        let own = candidate.iter().filter(|s| **s == WordSource::Own).count();
        let other = candidate.iter().filter(|s| **s == WordSource::Other).count();
        if own >= 1 && own > other {
            break candidate;
        }
    };
    let words: Vec<String> = flags
        .into_iter()
        .map(|source| {
            let source = match source {
                WordSource::Own => pool.own,
                WordSource::Other => pool.other,
                WordSource::Neutral => pool.neutral,
            };
            let word = &source[rng.gen_range(0..source.len())];
            if spec.misspell_rate > 0.0 && rng.gen_bool(spec.misspell_rate) {
                misspell(word, rng)
            } else {
                word.clone()
            }
        })
        .collect();
    words.join(" ")
}

/// Generate the corpus a `CorpusSpec` describes. Identical seeds produce
/// identical corpora.
pub fn generate(spec: &CorpusSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sites = Vec::with_capacity(spec.n_sites);
    let mut truth = Vec::new();

    for s in 0..spec.n_sites {
        let site_id = format!("market-{:02}", s + 1);
        let mut products = Vec::with_capacity(spec.products_per_site);
        for i in 0..spec.products_per_site {
            let relevant = rng.gen_bool(spec.positive_rate);
            let title_pool = context_pools(spec, relevant, false);
            let body_pool = context_pools(spec, relevant, true);
            let title_len = rng.gen_range(spec.title_words.0..=spec.title_words.1);
            let body_len = rng.gen_range(spec.body_words.0..=spec.body_words.1);
            let item_title = sample_context(&title_pool, title_len, spec, &mut rng);
            let item_description = sample_context(&body_pool, body_len, spec, &mut rng);
            let url = format!("http://{site_id}.fixture/item/{i}");
            let observed = base_time() + chrono::Duration::hours((s * spec.products_per_site + i) as i64);
            products.push(MarketProduct {
                site_id: site_id.clone(),
                url: url.clone(),
                item_title,
                item_description,
                vendor_name: VENDOR_POOL[rng.gen_range(0..VENDOR_POOL.len())].to_string(),
                shipping_details: String::new(),
                item_reviews: vec![],
                items_sold: if rng.gen_bool(0.5) { Some(rng.gen_range(0..500)) } else { None },
                items_left: None,
                cve_ids: vec![],
                transaction_details: None,
                ratings: if rng.gen_bool(0.5) {
                    Some((rng.gen_range(0..=50) as f64) / 10.0)
                } else {
                    None
                },
                price_btc: Some((rng.gen_range(1..=500_000) as f64) / 10_000.0),
                first_seen: observed,
                last_seen: observed,
                label: Label::Unlabeled,
            });
            truth.push(LabelAssignment {
                site_id: site_id.clone(),
                key: url,
                label: if relevant { Label::Relevant } else { Label::NotRelevant },
            });
        }
        let mut topics = Vec::new();
        if spec.topics_per_site > 0 {
            let forum_id = format!("forum-{:02}", s + 1);
            for i in 0..spec.topics_per_site {
                let relevant = rng.gen_bool(spec.positive_rate);
                let title_pool = context_pools(spec, relevant, false);
                let body_pool = context_pools(spec, relevant, true);
                let topic_id = format!("t{i}");
                let n_posts = rng.gen_range(1..=5);
                let posts = (0..n_posts)
                    .map(|p| ForumPost {
                        post_id: format!("{topic_id}/p{p}"),
                        post_content: sample_context(
                            &body_pool,
                            rng.gen_range(4..=12),
                            spec,
                            &mut rng,
                        ),
                        post_author: VENDOR_POOL[rng.gen_range(0..VENDOR_POOL.len())].to_string(),
                        author_status: None,
                        reputation: None,
                        timestamp: None,
                    })
                    .collect();
                topics.push(ForumTopic {
                    site_id: forum_id.clone(),
                    topic_id: topic_id.clone(),
                    topic_content: sample_context(
                        &title_pool,
                        rng.gen_range(3..=6),
                        spec,
                        &mut rng,
                    ),
                    topic_author: VENDOR_POOL[rng.gen_range(0..VENDOR_POOL.len())].to_string(),
                    topic_interest: None,
                    posts,
                    label: Label::Unlabeled,
                });
                truth.push(LabelAssignment {
                    site_id: forum_id.clone(),
                    key: topic_id,
                    label: if relevant { Label::Relevant } else { Label::NotRelevant },
                });
            }
        }
        sites.push(SyntheticSite { site_id, products, topics });
    }
    Ok(SyntheticCorpus { sites, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_count_is_binomial_and_deterministic() {
        let spec = CorpusSpec {
            n_sites: 5,
            products_per_site: 200,
            seed: 7,
            ..CorpusSpec::default()
        };
        let corpus = generate(&spec).unwrap();
        let positives =
            corpus.truth.iter().filter(|t| t.label == Label::Relevant).count();
        // 1000 draws at 0.13: mean 130, sd ~10.6; 4 sigma bounds.
        assert!((88..=172).contains(&positives), "positives {positives}");
        let again = generate(&spec).unwrap();
        assert_eq!(corpus, again);
    }

    #[test]
    fn zero_misspell_rate_keeps_pool_words_verbatim() {
        let spec = CorpusSpec {
            n_sites: 2,
            products_per_site: 30,
            misspell_rate: 0.0,
            seed: 3,
            ..CorpusSpec::default()
        };
        let corpus = generate(&spec).unwrap();
        let all_pool: std::collections::BTreeSet<&str> = spec
            .vocab_relevant
            .iter()
            .chain(spec.vocab_irrelevant.iter())
            .map(|s| s.as_str())
            .collect();
        for site in &corpus.sites {
            for p in &site.products {
                for word in p.item_title.split(' ').chain(p.item_description.split(' ')) {
                    assert!(all_pool.contains(word), "word `{word}` not in any pool");
                }
            }
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate(&CorpusSpec { n_sites: 1, products_per_site: 20, seed: 1, ..Default::default() })
            .unwrap();
        let b = generate(&CorpusSpec { n_sites: 1, products_per_site: 20, seed: 2, ..Default::default() })
            .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn bag_of_words_rule_is_perfect_on_uncorrupted_corpus() {
        let spec = CorpusSpec {
            n_sites: 3,
            products_per_site: 100,
            misspell_rate: 0.0,
            seed: 11,
            ..CorpusSpec::default()
        };
        let corpus = generate(&spec).unwrap();
        let relevant_pool: std::collections::BTreeSet<&str> =
            spec.vocab_relevant.iter().map(|s| s.as_str()).collect();
        for ex in corpus.labeled_examples() {
            let predicted = ex
                .title_text
                .split(' ')
                .chain(ex.body_text.split(' '))
                .any(|w| relevant_pool.contains(w));
            assert_eq!(predicted, ex.label == Label::Relevant, "title `{}`", ex.title_text);
        }
    }

    #[test]
    fn dual_view_mode_separates_title_and_body_vocabulary() {
        let spec = CorpusSpec {
            n_sites: 2,
            products_per_site: 50,
            misspell_rate: 0.0,
            dual_view_mode: true,
            seed: 5,
            ..CorpusSpec::default()
        };
        let corpus = generate(&spec).unwrap();
        let mut title_words = std::collections::BTreeSet::new();
        let mut body_words = std::collections::BTreeSet::new();
        for site in &corpus.sites {
            for p in &site.products {
                title_words.extend(p.item_title.split(' ').map(String::from));
                body_words.extend(p.item_description.split(' ').map(String::from));
            }
        }
        assert!(title_words.is_disjoint(&body_words));
    }

    #[test]
    fn overlapping_pools_rejected() {
        let mut spec = CorpusSpec::default();
        spec.vocab_irrelevant.push("exploit".to_string());
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn contaminated_text_keeps_own_class_majority() {
        let spec = CorpusSpec {
            n_sites: 2,
            products_per_site: 100,
            contamination: 0.4,
            misspell_rate: 0.0,
            title_words: (1, 5),
            body_words: (2, 9),
            seed: 21,
            ..CorpusSpec::default()
        };
        let corpus = generate(&spec).unwrap();
        let rel: std::collections::BTreeSet<&str> =
            spec.vocab_relevant.iter().map(|s| s.as_str()).collect();
        let mut saw_contamination = false;
        for (site, truth) in corpus.sites.iter().zip(corpus.truth.chunks(100)) {
            for (p, t) in site.products.iter().zip(truth) {
                let relevant = t.label == Label::Relevant;
                for text in [&p.item_title, &p.item_description] {
                    let own = text.split(' ').filter(|w| rel.contains(w) == relevant).count();
                    let other = text.split(' ').count() - own;
                    assert!(own > other, "contaminants outnumber own-class words in `{text}`");
                    saw_contamination |= other > 0;
                }
            }
        }
        assert!(saw_contamination, "contamination rate 0.4 never produced a cross-class word");
    }

    #[test]
    fn composition_pools_are_disjoint_and_share_morphemes() {
        let (rel, irr) = composition_pools(8, 3);
        assert_eq!(rel.len(), 64);
        assert_eq!(irr.len(), 64);
        let rel_set: std::collections::BTreeSet<&String> = rel.iter().collect();
        assert!(rel_set.len() == 64, "duplicate compositions");
        assert!(rel.iter().all(|w| !irr.contains(w)));
        // Two words sharing a leading morpheme share its character grams.
        let prefix = &rel[0][..4];
        let sharing = rel.iter().filter(|w| w.starts_with(prefix)).count();
        assert!(sharing >= 8, "expected a shared leading morpheme across compositions");
        let again = composition_pools(8, 3);
        assert_eq!(again.0, rel);
    }

    #[test]
    fn forum_topics_generated_when_requested() {
        let spec = CorpusSpec {
            n_sites: 2,
            products_per_site: 5,
            topics_per_site: 4,
            seed: 2,
            ..CorpusSpec::default()
        };
        let corpus = generate(&spec).unwrap();
        assert!(corpus.sites.iter().all(|s| s.topics.len() == 4));
        assert_eq!(corpus.truth.len(), 2 * (5 + 4));
        assert_eq!(corpus.labeled_examples().len(), 18);
    }

    #[test]
    fn written_corpus_loads_back_and_labels_apply() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec {
            n_sites: 2,
            products_per_site: 10,
            seed: 4,
            ..CorpusSpec::default()
        };
        let corpus = generate(&spec).unwrap();
        corpus.write_to_dir(dir.path()).unwrap();
        let mut products =
            crate::datamodel::load_products(dir.path().join("market-01_products.ndjson")).unwrap();
        assert_eq!(products.len(), 10);
        let truth = crate::datamodel::load_label_file(dir.path().join("ground_truth.ndjson")).unwrap();
        let site_truth: Vec<_> =
            truth.into_iter().filter(|t| t.site_id == "market-01").collect();
        let applied =
            crate::datamodel::apply_product_labels(&mut products, &site_truth).unwrap();
        assert_eq!(applied, 10);
        assert!(products.iter().all(|p| p.label.is_labeled()));
    }
}
