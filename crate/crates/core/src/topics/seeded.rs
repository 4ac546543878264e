use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{GibbsSampler, TopicCorpus, TopicError, TopicModel, TopicModelParams};

pub const DEFAULT_ANTI_SEEDS: &str = include_str!("../../configs/seeds_anti.toml");
pub const DEFAULT_PRO_SEEDS: &str = include_str!("../../configs/seeds_pro.toml");

pub const BACKGROUND_TOPIC: &str = "background";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTopic {
    pub name: String,
    pub words: Vec<String>,
}

/// Named topics with their seed words, plus an optional background topic
/// that every document may use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedWordConfig {
    #[serde(default)]
    pub background: bool,
    #[serde(rename = "topic")]
    pub topics: Vec<SeedTopic>,
}

impl SeedWordConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, TopicError> {
        let cfg: Self = toml::from_str(text).map_err(|e| TopicError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, TopicError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TopicError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn default_anti() -> Self {
        Self::from_toml_str(DEFAULT_ANTI_SEEDS).expect("bundled anti seed config is valid")
    }

    pub fn default_pro() -> Self {
        Self::from_toml_str(DEFAULT_PRO_SEEDS).expect("bundled pro seed config is valid")
    }

    pub fn validate(&self) -> Result<(), TopicError> {
        if self.topics.is_empty() {
            return Err(TopicError::Config("seed configuration has no topics".into()));
        }
        let mut names = BTreeSet::new();
        let mut owner: HashMap<&str, &str> = HashMap::new();
        for t in &self.topics {
            if !names.insert(t.name.as_str()) || (self.background && t.name == BACKGROUND_TOPIC) {
                return Err(TopicError::Config(format!("duplicate topic name {:?}", t.name)));
            }
            if t.words.is_empty() {
                return Err(TopicError::Config(format!("topic {:?} has no seed words", t.name)));
            }
            for w in &t.words {
                if w.is_empty() || *w != w.to_lowercase() {
                    return Err(TopicError::Config(format!("seed word {w:?} must be a lowercase token")));
                }
                if let Some(prev) = owner.insert(w, &t.name) {
                    if prev != t.name {
                        return Err(TopicError::Config(format!(
                            "seed word {w:?} seeds both {prev:?} and {:?}",
                            t.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Seed topics in config order, then the background topic if any.
    pub fn topic_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.topics.iter().map(|t| t.name.clone()).collect();
        if self.background {
            names.push(BACKGROUND_TOPIC.to_string());
        }
        names
    }

    pub fn topic_count(&self) -> usize {
        self.topics.len() + usize::from(self.background)
    }
}

/// Label set of each document: the topics whose seed words it contains,
/// plus the background topic. A document without seed hits gets only the
/// background topic, or every topic when there is no background topic.
pub fn document_label_sets(corpus: &TopicCorpus, config: &SeedWordConfig) -> Result<Vec<Vec<u32>>, TopicError> {
    let mut seed_of: HashMap<u32, u32> = HashMap::new();
    let mut missing = Vec::new();
    for (k, t) in config.topics.iter().enumerate() {
        let ids: Vec<u32> = t.words.iter().filter_map(|w| corpus.term_id(w)).collect();
        if ids.is_empty() {
            missing.push(t.name.clone());
        }
        for id in ids {
            seed_of.insert(id, k as u32);
        }
    }
    if !missing.is_empty() {
        return Err(TopicError::Config(format!("topics without in-vocabulary seed words: {}", missing.join(", "))));
    }
    let k = config.topic_count() as u32;
    let background = config.background.then_some(config.topics.len() as u32);
    let mut unseeded = 0;
    let sets = corpus
        .docs()
        .iter()
        .map(|doc| {
            let mut set: BTreeSet<u32> = doc.iter().filter_map(|w| seed_of.get(w).copied()).collect();
            if set.is_empty() {
                unseeded += 1;
            }
            match background {
                Some(b) => {
                    set.insert(b);
                }
                None if set.is_empty() => set.extend(0..k),
                None => {}
            }
            set.into_iter().collect()
        })
        .collect();
    if unseeded > 0 && background.is_none() {
        warn!("{unseeded} documents contain no seed words and may use any topic");
    }
    Ok(sets)
}

/// Labeled LDA with document labels derived from seed-word presence.
///
/// The topic count is taken from `config`; `params.k` is ignored.
pub fn labeled_lda(
    corpus: &TopicCorpus,
    config: &SeedWordConfig,
    params: &TopicModelParams,
) -> Result<TopicModel, TopicError> {
    config.validate()?;
    let params = TopicModelParams { k: config.topic_count(), ..*params };
    params.validate()?;
    if corpus.is_empty() {
        return Err(TopicError::EmptyCorpus);
    }
    let allowed = document_label_sets(corpus, config)?;
    let sampler = GibbsSampler::new(corpus, params.k, params.alpha(), params.beta, Some(allowed), params.seed);
    let (phi, theta, z) = sampler.run(&params);
    Ok(TopicModel {
        params,
        topic_names: config.topic_names(),
        terms: corpus.terms().to_vec(),
        doc_ids: corpus.doc_ids().to_vec(),
        phi,
        theta,
        z,
        background: config.background.then_some(config.topics.len()),
    })
}
