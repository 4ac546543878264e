use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lda_gibbs, TopicCorpus, TopicError, TopicModel, TopicModelParams};
use crate::seed::{derive_indexed, derive_seed, rng};

/// Gibbs sweeps used to fold a held-out document in with phi frozen.
pub const FOLD_IN_SWEEPS: usize = 20;

/// Number of documents containing each term.
pub fn doc_frequencies(corpus: &TopicCorpus) -> Vec<u32> {
    let mut df = vec![0u32; corpus.n_terms()];
    for doc in corpus.docs() {
        let mut seen: Vec<u32> = doc.clone();
        seen.sort_unstable();
        seen.dedup();
        for w in seen {
            df[w as usize] += 1;
        }
    }
    df
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub per_topic: Vec<f64>,
    pub mean: f64,
    /// Word pairs skipped because the conditioning word occurs in no document.
    pub skipped_pairs: usize,
}

/// UMass coherence of each topic's `top_n` words against `reference`:
/// the sum over ranked pairs `i < j` of `ln((D(w_i, w_j) + 1) / D(w_j))`,
/// with `D` counting documents.
pub fn umass_coherence(model: &TopicModel, reference: &TopicCorpus, top_n: usize) -> Result<Coherence, TopicError> {
    if top_n < 2 {
        return Err(TopicError::InvalidParams(format!("top_n must be >= 2, got {top_n}")));
    }
    let doc_sets: Vec<Vec<u32>> = reference
        .docs()
        .iter()
        .map(|d| {
            let mut s = d.clone();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();
    let df = doc_frequencies(reference);
    let mut skipped = 0;
    let per_topic: Vec<f64> = (0..model.k())
        .map(|k| {
            let words: Vec<Option<u32>> =
                model.top_word_ids(k, top_n).into_iter().map(|w| reference.term_id(&model.terms[w as usize])).collect();
            let mut score = 0.0;
            for j in 1..words.len() {
                let Some(wj) = words[j].filter(|&w| df[w as usize] > 0) else {
                    skipped += j;
                    continue;
                };
                for wi in &words[..j] {
                    let co = match wi {
                        Some(wi) => doc_sets
                            .iter()
                            .filter(|s| s.binary_search(wi).is_ok() && s.binary_search(&wj).is_ok())
                            .count(),
                        None => 0,
                    };
                    score += ((co as f64 + 1.0) / df[wj as usize] as f64).ln();
                }
            }
            score
        })
        .collect();
    let mean = per_topic.iter().sum::<f64>() / per_topic.len() as f64;
    Ok(Coherence { per_topic, mean, skipped_pairs: skipped })
}

fn fold_in(model: &TopicModel, doc: &[u32], seed: u64) -> Vec<f64> {
    let k = model.k();
    let alpha = model.params.alpha();
    let mut rng = rng(seed);
    let mut z: Vec<usize> = doc.iter().map(|_| rng.gen_range(0..k)).collect();
    let mut ndk = vec![0u32; k];
    for &t in &z {
        ndk[t] += 1;
    }
    let mut cum = vec![0.0; k];
    for _ in 0..FOLD_IN_SWEEPS {
        for (i, &w) in doc.iter().enumerate() {
            ndk[z[i]] -= 1;
            let mut total = 0.0;
            for t in 0..k {
                total += (ndk[t] as f64 + alpha) * model.phi[t][w as usize];
                cum[t] = total;
            }
            let u = rng.gen::<f64>() * total;
            z[i] = cum.iter().position(|&c| u < c).unwrap_or(k - 1);
            ndk[z[i]] += 1;
        }
    }
    let denom = doc.len() as f64 + k as f64 * alpha;
    ndk.iter().map(|&c| (c as f64 + alpha) / denom).collect()
}

fn perplexity_ids(model: &TopicModel, docs: &[Vec<u32>], oov: usize) -> Result<f64, TopicError> {
    let n_tokens: usize = docs.iter().map(Vec::len).sum();
    if n_tokens == 0 {
        return Err(TopicError::NoScorableTokens { oov });
    }
    let base = derive_seed(model.params.seed, "fold-in");
    let log_lik: f64 = docs
        .par_iter()
        .enumerate()
        .map(|(d, doc)| {
            let theta = fold_in(model, doc, derive_indexed(base, "doc", d as u64));
            doc.iter()
                .map(|&w| (0..model.k()).map(|t| theta[t] * model.phi[t][w as usize]).sum::<f64>().ln())
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok((-log_lik / n_tokens as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perplexity {
    pub value: f64,
    pub n_tokens: usize,
    pub oov: usize,
}

/// Held-out perplexity; out-of-vocabulary tokens are skipped and counted.
pub fn perplexity(model: &TopicModel, heldout: &[Vec<String>]) -> Result<Perplexity, TopicError> {
    let index: HashMap<&str, u32> = model.terms.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32)).collect();
    let mut oov = 0;
    let docs: Vec<Vec<u32>> = heldout
        .iter()
        .map(|tokens| {
            let ids: Vec<u32> = tokens.iter().filter_map(|t| index.get(t.as_str()).copied()).collect();
            oov += tokens.len() - ids.len();
            ids
        })
        .collect();
    let value = perplexity_ids(model, &docs, oov)?;
    Ok(Perplexity { value, n_tokens: docs.iter().map(Vec::len).sum(), oov })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    /// Highest mean UMass coherence on the training corpus.
    Coherence,
    /// Lowest perplexity on every fifth document, held out from training.
    Perplexity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSelection {
    pub metric: SelectionMetric,
    pub chosen_k: usize,
    pub scores: Vec<KScore>,
    pub model: TopicModel,
}

/// The best-scoring K; ties go to the smaller K.
pub fn pick_best(scores: &[KScore], metric: SelectionMetric) -> Option<usize> {
    let mut sorted = scores.to_vec();
    sorted.sort_by_key(|s| s.k);
    let better = |a: f64, b: f64| match metric {
        SelectionMetric::Coherence => a > b,
        SelectionMetric::Perplexity => a < b,
    };
    let mut best: Option<KScore> = None;
    for s in sorted {
        if best.is_none_or(|b| better(s.score, b.score)) {
            best = Some(s);
        }
    }
    best.map(|b| b.k)
}

/// Fits one LDA model per candidate K and keeps the best.
///
/// Each candidate uses `template` with `k` replaced and the seed derived
/// from the template seed and K. Candidates are fitted in parallel.
pub fn select_topic_count(
    corpus: &TopicCorpus,
    candidates: &[usize],
    metric: SelectionMetric,
    template: &TopicModelParams,
    top_n: usize,
) -> Result<TopicSelection, TopicError> {
    if candidates.is_empty() {
        return Err(TopicError::InvalidParams("no candidate topic counts".into()));
    }
    let (train, heldout) = match metric {
        SelectionMetric::Coherence => (corpus.clone(), None),
        SelectionMetric::Perplexity => {
            let (held, kept): (Vec<usize>, Vec<usize>) = (0..corpus.len()).partition(|i| i % 5 == 4);
            if held.is_empty() || kept.is_empty() {
                return Err(TopicError::InvalidParams("perplexity selection needs at least 5 documents".into()));
            }
            (corpus.subset(&kept)?, Some(corpus.subset(&held)?))
        }
    };
    let fitted = candidates
        .par_iter()
        .map(|&k| {
            let params = TopicModelParams { k, seed: derive_indexed(template.seed, "k", k as u64), ..*template };
            let model = lda_gibbs(&train, &params)?;
            let score = match &heldout {
                None => umass_coherence(&model, &train, top_n)?.mean,
                Some(h) => perplexity_ids(&model, h.docs(), 0)?,
            };
            Ok((KScore { k, score }, model))
        })
        .collect::<Result<Vec<_>, TopicError>>()?;
    let scores: Vec<KScore> = fitted.iter().map(|(s, _)| *s).collect();
    let chosen_k = pick_best(&scores, metric).expect("at least one candidate");
    let model = fitted.into_iter().find(|(s, _)| s.k == chosen_k).map(|(_, m)| m).expect("chosen model exists");
    Ok(TopicSelection { metric, chosen_k, scores, model })
}
