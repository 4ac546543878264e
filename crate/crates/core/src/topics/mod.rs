//! Topic discovery: collapsed-Gibbs LDA, model-size selection, seed-word
//! Labeled LDA, topic merging and per-period topic shares.

mod gibbs;
mod metrics;
mod report;
mod seeded;

use std::collections::HashMap;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textproc::{StopWords, Vocabulary};

pub use gibbs::{lda_gibbs, GibbsSampler};
pub use metrics::{
    doc_frequencies, perplexity, pick_best, select_topic_count, umass_coherence, Coherence, KScore, SelectionMetric,
    TopicSelection,
};
pub use report::{
    apply_merge, period_topic_distribution, write_assignments_csv, write_period_table_csv, DocAssignment, MergeConfig,
    MergeEntry, MergedTopic, PeriodTopicTable, TopicRef, TopicReport, DEFAULT_ASSIGN_THRESHOLD,
};
pub use seeded::{document_label_sets, labeled_lda, SeedTopic, SeedWordConfig, DEFAULT_ANTI_SEEDS, DEFAULT_PRO_SEEDS};

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("corpus has no non-empty documents")]
    EmptyCorpus,
    #[error("invalid topic model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid topic configuration: {0}")]
    Config(String),
    #[error("no scorable tokens ({oov} out-of-vocabulary tokens skipped)")]
    NoScorableTokens { oov: usize },
    #[error("document {0:?} is assigned a topic but has no period")]
    MissingPeriod(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicModelParams {
    pub k: usize,
    /// Symmetric document-topic prior; `None` means `50 / k`.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    /// Sweeps between the samples averaged into phi and theta.
    pub sample_lag: usize,
    pub seed: u64,
}

impl TopicModelParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, alpha: None, beta: 0.01, iterations: 2000, burn_in: 500, sample_lag: 10, seed }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k as f64)
    }

    pub fn validate(&self) -> Result<(), TopicError> {
        let bad = |m: String| Err(TopicError::InvalidParams(m));
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if !(self.alpha() > 0.0 && self.alpha().is_finite()) {
            return bad(format!("alpha must be > 0, got {}", self.alpha()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be > 0, got {}", self.beta));
        }
        if self.iterations <= self.burn_in {
            return bad(format!("iterations ({}) must exceed burn_in ({})", self.iterations, self.burn_in));
        }
        if self.sample_lag == 0 {
            return bad("sample_lag must be >= 1".into());
        }
        Ok(())
    }
}

/// Documents as term-id sequences over a shared term list.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicCorpus {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    doc_ids: Vec<String>,
    docs: Vec<Vec<u32>>,
    /// Ids of input documents dropped for having no in-vocabulary tokens.
    pub dropped: Vec<String>,
}

impl TopicCorpus {
    /// Builds the corpus from raw term ids. Empty documents are dropped with
    /// a warning.
    pub fn new(terms: Vec<String>, docs: Vec<(String, Vec<u32>)>) -> Result<Self, TopicError> {
        let index: HashMap<String, u32> = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        if index.len() != terms.len() {
            return Err(TopicError::Config("duplicate terms in vocabulary".into()));
        }
        let mut doc_ids = Vec::new();
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for (id, doc) in docs {
            if let Some(&bad) = doc.iter().find(|&&w| w as usize >= terms.len()) {
                return Err(TopicError::Config(format!("document {id:?} uses term id {bad} outside the vocabulary")));
            }
            if doc.is_empty() {
                dropped.push(id);
            } else {
                doc_ids.push(id);
                kept.push(doc);
            }
        }
        if !dropped.is_empty() {
            warn!("dropped {} empty documents from the topic corpus", dropped.len());
        }
        if kept.is_empty() {
            return Err(TopicError::EmptyCorpus);
        }
        Ok(Self { terms, index, doc_ids, docs: kept, dropped })
    }

    /// Tokenized documents with stopwords and terms below `min_df` removed.
    pub fn from_tokens<S: AsRef<str>>(
        docs: &[(S, Vec<String>)],
        min_df: u32,
        stopwords: &StopWords,
    ) -> Result<Self, TopicError> {
        let token_lists: Vec<&[String]> = docs.iter().map(|(_, t)| t.as_slice()).collect();
        let vocab = Vocabulary::build(&token_lists, min_df, stopwords).map_err(|_| TopicError::EmptyCorpus)?;
        let ids = docs
            .iter()
            .map(|(id, tokens)| (id.as_ref().to_string(), tokens.iter().filter_map(|t| vocab.get(t)).collect()))
            .collect();
        Self::new(vocab.terms().to_vec(), ids)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn docs(&self) -> &[Vec<u32>] {
        &self.docs
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn n_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }

    /// Maps tokens onto this corpus's term ids, returning the mapped
    /// document and the number of out-of-vocabulary tokens skipped.
    pub fn encode(&self, tokens: &[String]) -> (Vec<u32>, usize) {
        let ids: Vec<u32> = tokens.iter().filter_map(|t| self.term_id(t)).collect();
        let oov = tokens.len() - ids.len();
        (ids, oov)
    }

    /// The documents at `indices` over the same vocabulary.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, TopicError> {
        let docs = indices.iter().map(|&i| (self.doc_ids[i].clone(), self.docs[i].clone())).collect();
        Self::new(self.terms.clone(), docs)
    }
}

/// A fitted topic model. Rows of `phi` are topics over terms; rows of
/// `theta` are documents over topics, aligned with `doc_ids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub params: TopicModelParams,
    pub topic_names: Vec<String>,
    pub terms: Vec<String>,
    pub doc_ids: Vec<String>,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub z: Vec<Vec<u32>>,
    /// Index of the background topic of a seeded model.
    pub background: Option<usize>,
}

impl TopicModel {
    pub fn k(&self) -> usize {
        self.phi.len()
    }

    /// Term ids of topic `k` by descending probability, ties by term id.
    pub fn top_word_ids(&self, k: usize, n: usize) -> Vec<u32> {
        let row = &self.phi[k];
        let mut ids: Vec<u32> = (0..row.len() as u32).collect();
        ids.sort_by(|&a, &b| row[b as usize].total_cmp(&row[a as usize]).then(a.cmp(&b)));
        ids.truncate(n);
        ids
    }

    pub fn top_words(&self, k: usize, n: usize) -> Vec<(String, f64)> {
        self.top_word_ids(k, n).into_iter().map(|w| (self.terms[w as usize].clone(), self.phi[k][w as usize])).collect()
    }
}

fn default_topic_names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("topic_{i}")).collect()
}
