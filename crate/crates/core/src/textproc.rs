//! Tokenization, vocabulary construction and TF-IDF vectorization.
//!
//! Everything downstream (keyword filtering, the stance classifier, the topic
//! models, vaccine mention matching) goes through [`tokenize`], so the rules
//! here define what a "word" is for the whole crate:
//!
//! * text is NFKC-normalized, then lowercased;
//! * URLs (`http://`, `https://`, `www.`) are removed;
//! * user mentions collapse to the single token `@user`;
//! * hashtags are kept with their leading `#`;
//! * everything else is split on non-alphanumeric characters and tokens
//!   shorter than two characters are dropped.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Token emitted in place of every `@handle`.
pub const MENTION_TOKEN: &str = "@user";

const URL_PREFIXES: [&str; 3] = ["http://", "https://", "www."];
const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Error)]
pub enum TextError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("min_df must be at least 1")]
    InvalidMinDf,
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits `text` into normalized tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized: String = text.nfkc().collect::<String>().to_lowercase();
    let chars: Vec<char> = normalized.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;

    while i < chars.len() {
        let c = chars[i];
        let at_boundary = i == 0 || !chars[i - 1].is_alphanumeric();

        if at_boundary && starts_with_url(&chars[i..]) {
            while i < chars.len() && !chars[i].is_whitespace() {
                i += 1;
            }
            continue;
        }

        if (c == '@' || c == '#') && at_boundary && chars.get(i + 1).is_some_and(|&n| is_word_char(n)) {
            let start = i + 1;
            let mut end = start;
            while end < chars.len() && is_word_char(chars[end]) {
                end += 1;
            }
            if c == '@' {
                tokens.push(MENTION_TOKEN.to_string());
            } else {
                let mut tag = String::with_capacity(end - i);
                tag.push('#');
                tag.extend(&chars[start..end]);
                tokens.push(tag);
            }
            i = end;
            continue;
        }

        if c.is_alphanumeric() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
            if i - start >= 2 {
                tokens.push(chars[start..i].iter().collect());
            }
            continue;
        }

        i += 1;
    }
    tokens
}

fn starts_with_url(rest: &[char]) -> bool {
    URL_PREFIXES.iter().any(|prefix| {
        let mut n = 0;
        for (a, b) in prefix.chars().zip(rest.iter()) {
            if a != *b {
                return false;
            }
            n += 1;
        }
        n == prefix.chars().count()
    })
}

/// A set of terms excluded from vocabularies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn none() -> Self {
        Self::default()
    }

    /// The English list bundled with the crate.
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    /// One term per line; blank lines and lines starting with `# ` are ignored.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with("# "))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self, TextError> {
        let io_err = |source| TextError::Io { path: path.display().to_string(), source };
        let file = std::fs::File::open(path).map_err(io_err)?;
        let mut text = String::new();
        for line in std::io::BufReader::new(file).lines() {
            text.push_str(&line.map_err(io_err)?);
            text.push('\n');
        }
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, term: &str) -> bool {
        self.0.contains(term)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Terms in sorted order.
    pub fn terms(&self) -> Vec<String> {
        let mut terms: Vec<String> = self.0.iter().cloned().collect();
        terms.sort();
        terms
    }
}

impl FromIterator<String> for StopWords {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    doc_freq: Vec<u32>,
    n_docs: u32,
}

/// Term index with document frequencies.
///
/// Indices are contiguous from zero and ordered by descending document
/// frequency, ties broken alphabetically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<u32>,
    n_docs: u32,
    index: HashMap<String, u32>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(repr: VocabularyRepr) -> Self {
        Self::from_parts(repr.terms, repr.doc_freq, repr.n_docs)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr { terms: v.terms, doc_freq: v.doc_freq, n_docs: v.n_docs }
    }
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, doc_freq: Vec<u32>, n_docs: u32) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { terms, doc_freq, n_docs, index }
    }

    /// Builds a vocabulary keeping terms with `df >= min_df` that are not stopwords.
    pub fn build<D: AsRef<[String]>>(docs: &[D], min_df: u32, stopwords: &StopWords) -> Result<Self, TextError> {
        if min_df == 0 {
            return Err(TextError::InvalidMinDf);
        }
        if docs.is_empty() {
            return Err(TextError::EmptyCorpus);
        }
        let mut df = document_frequencies(docs);
        df.retain(|term, count| *count >= min_df && !stopwords.contains(term));
        let mut entries: Vec<(String, u32)> = df.into_iter().map(|(t, c)| (t.to_string(), c)).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let (terms, doc_freq) = entries.into_iter().unzip();
        Ok(Self::from_parts(terms, doc_freq, docs.len() as u32))
    }

    /// Appends terms of `docs` missing from this vocabulary.
    ///
    /// Existing terms keep their index and statistics, so vectors over the
    /// old vocabulary are unchanged. New terms are appended in the usual
    /// (descending df, alphabetical) order, with their document frequency
    /// rescaled from the new corpus onto this vocabulary's document count.
    pub fn extend<D: AsRef<[String]>>(
        &self,
        docs: &[D],
        min_df: u32,
        stopwords: &StopWords,
    ) -> Result<Self, TextError> {
        let fresh = Self::build(docs, min_df, stopwords)?;
        let mut terms = self.terms.clone();
        let mut doc_freq = self.doc_freq.clone();
        let scale = f64::from(self.n_docs.max(1)) / f64::from(fresh.n_docs);
        for (term, &df) in fresh.terms.iter().zip(&fresh.doc_freq) {
            if self.index.contains_key(term) {
                continue;
            }
            let rescaled = (f64::from(df) * scale).round().clamp(1.0, f64::from(self.n_docs.max(1)));
            terms.push(term.clone());
            doc_freq.push(rescaled as u32);
        }
        Ok(Self::from_parts(terms, doc_freq, self.n_docs.max(1)))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> u32 {
        self.n_docs
    }

    pub fn get(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, idx: u32) -> &str {
        &self.terms[idx as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn doc_freq(&self, idx: u32) -> u32 {
        self.doc_freq[idx as usize]
    }

    /// Smoothed inverse document frequency, `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, idx: u32) -> f64 {
        let n = f64::from(self.n_docs);
        let df = f64::from(self.doc_freq[idx as usize]);
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }
}

/// Number of documents containing each term.
pub fn document_frequencies<D: AsRef<[String]>>(docs: &[D]) -> HashMap<&str, u32> {
    let mut df: HashMap<&str, u32> = HashMap::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for doc in docs {
        seen.clear();
        for tok in doc.as_ref() {
            if seen.insert(tok.as_str()) {
                *df.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
    }
    df
}

/// Sparse vector with strictly ascending indices and no stored zeros.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Builds a vector from arbitrary `(index, weight)` pairs, summing
    /// duplicates and dropping zeros.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (idx, w) in pairs {
            match entries.last_mut() {
                Some(last) if last.0 == idx => last.1 += w,
                _ => entries.push((idx, w)),
            }
        }
        entries.retain(|e| e.1 != 0.0);
        Self { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }
}

/// TF-IDF vector of one tokenized document, L2-normalized.
///
/// Raw term counts are weighted by [`Vocabulary::idf`]; out-of-vocabulary
/// tokens are ignored, so an all-OOV document yields an empty vector.
pub fn tfidf_vectorize(doc: &[String], vocab: &Vocabulary) -> SparseVector {
    let mut counts: HashMap<u32, u32> = HashMap::new();
    for tok in doc {
        if let Some(idx) = vocab.get(tok) {
            *counts.entry(idx).or_insert(0) += 1;
        }
    }
    let pairs: Vec<(u32, f64)> = counts.into_iter().map(|(idx, tf)| (idx, f64::from(tf) * vocab.idf(idx))).collect();
    let mut vector = SparseVector::from_pairs(pairs);
    let norm = vector.norm();
    if norm > 0.0 {
        for e in &mut vector.entries {
            e.1 /= norm;
        }
    }
    vector
}
