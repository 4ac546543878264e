//! Seeded synthetic data generators.
//!
//! Used by the test suites, the examples and the demo fixture generator.
//! Nothing here touches the filesystem.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{LabeledDataset, LabeledRecord, StanceLabel};
use crate::topics::TopicCorpus;

const DEFAULT_FILLER: &[&str] = &[
    "today", "news", "think", "people", "week", "read", "said", "time", "world", "really", "going", "know", "look",
    "still", "report", "city", "thread", "update", "morning", "story",
];

/// Stem of the planted keywords for `label`; words are `{stem}{index:02}`.
pub fn keyword_stem(label: StanceLabel) -> &'static str {
    match label {
        StanceLabel::Anti => "antikw",
        StanceLabel::Pro => "prokw",
        StanceLabel::Neutral => "neutkw",
    }
}

/// Planted keyword `index` of `label`.
pub fn keyword(label: StanceLabel, index: usize) -> String {
    format!("{}{index:02}", keyword_stem(label))
}

/// Three-class corpus built from disjoint per-class keyword pools plus
/// shared filler words.
#[derive(Debug, Clone)]
pub struct KeywordCorpusConfig {
    pub name: String,
    pub n_docs: usize,
    pub pool_size: usize,
    /// Pool words are `keyword(label, pool_offset..pool_offset + pool_size)`.
    /// Two corpora with different offsets share only part of their pools.
    pub pool_offset: usize,
    /// Inclusive range of keywords drawn per Anti or Pro document.
    pub keywords_per_doc: (usize, usize),
    /// Inclusive range of keywords drawn per Neutral document.
    pub neutral_keywords_per_doc: (usize, usize),
    pub filler_per_doc: (usize, usize),
    pub filler: Vec<String>,
    /// Probability that a label is replaced by a uniform draw over the
    /// three classes (which may return the original class).
    pub label_noise: f64,
}

impl Default for KeywordCorpusConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            n_docs: 600,
            pool_size: 30,
            pool_offset: 0,
            keywords_per_doc: (2, 4),
            neutral_keywords_per_doc: (2, 4),
            filler_per_doc: (2, 6),
            filler: DEFAULT_FILLER.iter().map(|s| s.to_string()).collect(),
            label_noise: 0.1,
        }
    }
}

impl KeywordCorpusConfig {
    /// Stance keywords on top of neutral documents made mostly of `filler`.
    ///
    /// Neutral documents carry at most one keyword, so the filler words
    /// themselves lean Neutral after training.
    pub fn planted(filler: Vec<String>, n_docs: usize) -> Self {
        Self {
            name: "planted".into(),
            n_docs,
            keywords_per_doc: (1, 3),
            neutral_keywords_per_doc: (0, 1),
            filler_per_doc: (3, 7),
            filler,
            label_noise: 0.0,
            ..Self::default()
        }
    }

    pub fn pool(&self, label: StanceLabel) -> Vec<String> {
        (self.pool_offset..self.pool_offset + self.pool_size).map(|i| keyword(label, i)).collect()
    }
}

/// Generates the corpus; classes cycle Anti, Pro, Neutral by record index
/// before noise is applied.
pub fn keyword_corpus(config: &KeywordCorpusConfig, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pools = StanceLabel::ALL.map(|l| config.pool(l));
    let records = (0..config.n_docs)
        .map(|i| {
            let truth = StanceLabel::from_index(i % 3);
            let (lo, hi) =
                if truth == StanceLabel::Neutral { config.neutral_keywords_per_doc } else { config.keywords_per_doc };
            let mut words: Vec<String> = Vec::new();
            for _ in 0..rng.gen_range(lo..=hi) {
                words.push(pools[truth.index()].choose(&mut rng).expect("non-empty pool").clone());
            }
            let (flo, fhi) = config.filler_per_doc;
            if !config.filler.is_empty() {
                for _ in 0..rng.gen_range(flo..=fhi) {
                    words.push(config.filler.choose(&mut rng).expect("non-empty filler").clone());
                }
            }
            words.shuffle(&mut rng);
            let label =
                if rng.gen_bool(config.label_noise) { StanceLabel::from_index(rng.gen_range(0..3)) } else { truth };
            LabeledRecord { id: format!("{}-{i:05}", config.name), text: words.join(" "), label }
        })
        .collect();
    LabeledDataset::new(config.name.clone(), records)
}

/// Documents that each draw most of their tokens from one of several
/// disjoint word pools.
#[derive(Debug, Clone)]
pub struct PlantedTopicConfig {
    pub n_topics: usize,
    pub pool_size: usize,
    pub n_docs: usize,
    pub doc_len: (usize, usize),
    /// Probability that a token comes from the document's own pool rather
    /// than a uniformly chosen pool.
    pub purity: f64,
}

impl Default for PlantedTopicConfig {
    fn default() -> Self {
        Self { n_topics: 4, pool_size: 10, n_docs: 200, doc_len: (20, 40), purity: 0.9 }
    }
}

pub fn planted_word(topic: usize, index: usize) -> String {
    format!("topic{topic}word{index}")
}

/// Planted topic corpus and its word pools. Document `d` belongs to topic
/// `d % n_topics`.
pub fn planted_topic_corpus(config: &PlantedTopicConfig, seed: u64) -> (TopicCorpus, Vec<Vec<String>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pools: Vec<Vec<String>> =
        (0..config.n_topics).map(|t| (0..config.pool_size).map(|j| planted_word(t, j)).collect()).collect();
    let terms: Vec<String> = pools.iter().flatten().cloned().collect();
    let docs = (0..config.n_docs)
        .map(|d| {
            let own = d % config.n_topics;
            let len = rng.gen_range(config.doc_len.0..=config.doc_len.1);
            let ids = (0..len)
                .map(|_| {
                    let t = if rng.gen_bool(config.purity) { own } else { rng.gen_range(0..config.n_topics) };
                    (t * config.pool_size + rng.gen_range(0..config.pool_size)) as u32
                })
                .collect();
            (format!("doc{d:04}"), ids)
        })
        .collect();
    (TopicCorpus::new(terms, docs).expect("planted documents are non-empty"), pools)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let cfg = KeywordCorpusConfig { label_noise: 0.0, ..KeywordCorpusConfig::default() };
        let a = keyword_corpus(&cfg, 1);
        assert_eq!(a, keyword_corpus(&cfg, 1));
        assert_eq!(a.class_counts(), [200, 200, 200]);
        assert_ne!(a, keyword_corpus(&cfg, 2));
    }

    #[test]
    fn noise_rate_is_close_to_nominal() {
        let cfg = KeywordCorpusConfig { n_docs: 6000, label_noise: 0.3, ..KeywordCorpusConfig::default() };
        let ds = keyword_corpus(&cfg, 5);
        let flipped = ds.records.iter().enumerate().filter(|(i, r)| r.label.index() != i % 3).count();
        // expected flip rate 0.3 * 2/3 = 0.2
        let rate = flipped as f64 / 6000.0;
        assert!((rate - 0.2).abs() < 0.02, "{rate}");
    }
}
