use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, LabeledDataset, Prediction, Predictions, StanceLabel, StancePredictor};
use crate::corpus::Tweet;
use crate::textproc::{tfidf_vectorize, tokenize, SparseVector, StopWords, Vocabulary};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const N_CLASSES: usize = 3;
/// Weight scale below which the lazy L2 factor is folded back into the weights.
const MIN_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Coefficient of the `l2 / 2 * ||W||^2` penalty; biases are not penalized.
    pub l2: f64,
    pub min_df: u32,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { learning_rate: 0.5, epochs: 20, l2: 1e-5, min_df: 1 }
    }
}

impl Hyperparams {
    pub fn validate(&self, allow_zero_epochs: bool) -> Result<(), ClassifierError> {
        let bad = |msg: &str| Err(ClassifierError::InvalidHyperparams(msg.to_string()));
        if self.epochs == 0 && !allow_zero_epochs {
            return bad("epochs must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 penalty must be >= 0");
        }
        if self.learning_rate * self.l2 >= 1.0 {
            return bad("learning_rate * l2 must be < 1");
        }
        if self.min_df == 0 {
            return bad("min_df must be >= 1");
        }
        Ok(())
    }
}

/// Numerically stable softmax over three scores.
pub fn softmax(scores: [f64; 3]) -> [f64; 3] {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = scores.map(|s| (s - max).exp());
    let total: f64 = exp.iter().sum();
    exp.map(|e| e / total)
}

fn log_sum_exp(scores: &[f64; 3]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

fn class_scores(weights: &[f64], bias: &[f64; 3], n_features: usize, x: &SparseVector) -> [f64; 3] {
    let mut s = *bias;
    for &(j, xj) in x.entries() {
        for (c, sc) in s.iter_mut().enumerate() {
            *sc += weights[c * n_features + j as usize] * xj;
        }
    }
    s
}

/// Mean cross-entropy plus `l2 / 2 * ||W||^2`, with its analytic gradient.
///
/// `weights` is class-major (`weights[c * n_features + j]`). Returns the
/// loss, the weight gradient (same layout) and the bias gradient.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: &[f64; 3],
    n_features: usize,
    data: &[(SparseVector, StanceLabel)],
    l2: f64,
) -> (f64, Vec<f64>, [f64; 3]) {
    let n = data.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad_w: Vec<f64> = weights.iter().map(|w| l2 * w).collect();
    let mut grad_b = [0.0; 3];
    for (x, y) in data {
        let s = class_scores(weights, bias, n_features, x);
        loss += log_sum_exp(&s) - s[y.index()];
        let p = softmax(s);
        for c in 0..N_CLASSES {
            let residual = (p[c] - if c == y.index() { 1.0 } else { 0.0 }) / n;
            grad_b[c] += residual;
            for &(j, xj) in x.entries() {
                grad_w[c * n_features + j as usize] += residual * xj;
            }
        }
    }
    let penalty = 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (loss / n + penalty, grad_w, grad_b)
}

fn objective(
    weights: &[f64],
    bias: &[f64; 3],
    n_features: usize,
    data: &[(SparseVector, StanceLabel)],
    l2: f64,
) -> f64 {
    let n = data.len().max(1) as f64;
    let ce: f64 = data
        .iter()
        .map(|(x, y)| {
            let s = class_scores(weights, bias, n_features, x);
            log_sum_exp(&s) - s[y.index()]
        })
        .sum();
    ce / n + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Multinomial logistic regression over TF-IDF features.
///
/// Immutable once trained; share it freely between prediction workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    format_version: u32,
    vocabulary: Vocabulary,
    weights: Vec<f64>,
    bias: [f64; 3],
    hyperparams: Hyperparams,
    seed: u64,
    loss_history: Vec<f64>,
}

impl LinearModel {
    /// All-zero model over `vocabulary`; predicts uniform probabilities.
    pub fn zeros(vocabulary: Vocabulary) -> Self {
        let weights = vec![0.0; N_CLASSES * vocabulary.len()];
        Self::from_parts(vocabulary, weights, [0.0; 3], Hyperparams::default(), 0)
    }

    pub fn from_parts(
        vocabulary: Vocabulary,
        weights: Vec<f64>,
        bias: [f64; 3],
        hyperparams: Hyperparams,
        seed: u64,
    ) -> Self {
        assert_eq!(weights.len(), N_CLASSES * vocabulary.len(), "weight matrix must be 3 x |V|");
        Self {
            format_version: MODEL_FORMAT_VERSION,
            vocabulary,
            weights,
            bias,
            hyperparams,
            seed,
            loss_history: Vec::new(),
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> [f64; 3] {
        self.bias
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Training objective before the first epoch and after each epoch.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().copied()
    }

    pub fn featurize(&self, tokens: &[String]) -> SparseVector {
        tfidf_vectorize(tokens, &self.vocabulary)
    }

    pub fn scores(&self, x: &SparseVector) -> [f64; 3] {
        class_scores(&self.weights, &self.bias, self.vocabulary.len(), x)
    }

    pub fn predict_vector(&self, x: &SparseVector) -> Prediction {
        Prediction::from_probs(softmax(self.scores(x)))
    }

    /// Predictions for every tweet, keyed by tweet id.
    pub fn predict_tweets(&self, tweets: &[Tweet]) -> Predictions {
        tweets.par_iter().map(|t| (t.id.clone(), self.predict(&t.text))).collect::<Vec<_>>().into_iter().collect()
    }

    /// Training objective of this model on `dataset`.
    pub fn loss_on(&self, dataset: &LabeledDataset) -> f64 {
        let data = featurize_dataset(dataset, &self.vocabulary);
        objective(&self.weights, &self.bias, self.vocabulary.len(), &data, self.hyperparams.l2)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("model serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ClassifierError> {
        let model: Self = serde_json::from_slice(bytes).map_err(|e| ClassifierError::Parse {
            path: "<model>".into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::ModelVersion(model.format_version));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        std::fs::write(path, self.to_json())
            .map_err(|source| ClassifierError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let bytes =
            std::fs::read(path).map_err(|source| ClassifierError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&bytes)
    }
}

impl StancePredictor for LinearModel {
    fn predict_tokens(&self, tokens: &[String]) -> Prediction {
        self.predict_vector(&self.featurize(tokens))
    }
}

fn dataset_tokens(dataset: &LabeledDataset) -> Vec<Vec<String>> {
    dataset.records.iter().map(|r| tokenize(&r.text)).collect()
}

fn featurize_dataset(dataset: &LabeledDataset, vocab: &Vocabulary) -> Vec<(SparseVector, StanceLabel)> {
    dataset.records.iter().map(|r| (tfidf_vectorize(&tokenize(&r.text), vocab), r.label)).collect()
}

fn check_classes(dataset: &LabeledDataset) -> Result<(), ClassifierError> {
    if dataset.class_counts().iter().filter(|&&c| c > 0).count() < 2 {
        return Err(ClassifierError::SingleClass);
    }
    Ok(())
}

struct Fit {
    weights: Vec<f64>,
    bias: [f64; 3],
    loss_history: Vec<f64>,
}

fn sgd(
    mut weights: Vec<f64>,
    mut bias: [f64; 3],
    n_features: usize,
    data: &[(SparseVector, StanceLabel)],
    hp: &Hyperparams,
    seed: u64,
) -> Result<Fit, ClassifierError> {
    let non_finite = |epoch: usize, loss: f64, weights: &[f64]| {
        let max_abs = weights.iter().map(|w| w.abs()).fold(0.0, f64::max);
        ClassifierError::NonFiniteLoss {
            epoch,
            diagnostics: format!("loss={loss}, max |w|={max_abs}, learning_rate={}", hp.learning_rate),
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let initial = objective(&weights, &bias, n_features, data, hp.l2);
    if !initial.is_finite() {
        return Err(non_finite(0, initial, &weights));
    }
    let mut loss_history = vec![initial];
    let lr = hp.learning_rate;
    let decay = 1.0 - lr * hp.l2;

    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        // true weights = scale * weights, so the L2 shrink is O(1) per step
        let mut scale = 1.0;
        for &i in &order {
            let (x, y) = &data[i];
            let mut s = bias;
            for &(j, xj) in x.entries() {
                for (c, sc) in s.iter_mut().enumerate() {
                    *sc += scale * weights[c * n_features + j as usize] * xj;
                }
            }
            let p = softmax(s);
            scale *= decay;
            for c in 0..N_CLASSES {
                let residual = p[c] - if c == y.index() { 1.0 } else { 0.0 };
                bias[c] -= lr * residual;
                let step = lr * residual / scale;
                for &(j, xj) in x.entries() {
                    weights[c * n_features + j as usize] -= step * xj;
                }
            }
            if scale < MIN_SCALE {
                weights.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
        }
        if scale != 1.0 {
            weights.iter_mut().for_each(|w| *w *= scale);
        }
        let loss = objective(&weights, &bias, n_features, data, hp.l2);
        if !loss.is_finite() {
            return Err(non_finite(epoch, loss, &weights));
        }
        loss_history.push(loss);
    }
    Ok(Fit { weights, bias, loss_history })
}

/// Trains a model from zero weights. Deterministic in `(dataset, hyperparams, seed)`.
pub fn train(dataset: &LabeledDataset, hyperparams: &Hyperparams, seed: u64) -> Result<LinearModel, ClassifierError> {
    hyperparams.validate(false)?;
    check_classes(dataset)?;
    let tokens = dataset_tokens(dataset);
    let vocabulary = Vocabulary::build(&tokens, hyperparams.min_df, &StopWords::none())?;
    let data: Vec<_> =
        tokens.iter().zip(&dataset.records).map(|(t, r)| (tfidf_vectorize(t, &vocabulary), r.label)).collect();
    let weights = vec![0.0; N_CLASSES * vocabulary.len()];
    let fit = sgd(weights, [0.0; 3], vocabulary.len(), &data, hyperparams, seed)?;
    Ok(LinearModel {
        format_version: MODEL_FORMAT_VERSION,
        vocabulary,
        weights: fit.weights,
        bias: fit.bias,
        hyperparams: *hyperparams,
        seed,
        loss_history: fit.loss_history,
    })
}

/// Continues training from `base` on `dataset`.
///
/// Terms unseen by `base` are appended to its vocabulary with zero weights,
/// so with `epochs = 0` the result predicts exactly like `base` on inputs
/// drawn from the base vocabulary.
pub fn warm_start_train(
    base: &LinearModel,
    dataset: &LabeledDataset,
    hyperparams: &Hyperparams,
    seed: u64,
) -> Result<LinearModel, ClassifierError> {
    hyperparams.validate(true)?;
    check_classes(dataset)?;
    let tokens = dataset_tokens(dataset);
    let vocabulary = base.vocabulary.extend(&tokens, hyperparams.min_df, &StopWords::none())?;
    let (old_v, new_v) = (base.vocabulary.len(), vocabulary.len());
    let mut weights = vec![0.0; N_CLASSES * new_v];
    for c in 0..N_CLASSES {
        weights[c * new_v..c * new_v + old_v].copy_from_slice(&base.weights[c * old_v..(c + 1) * old_v]);
    }
    let data: Vec<_> =
        tokens.iter().zip(&dataset.records).map(|(t, r)| (tfidf_vectorize(t, &vocabulary), r.label)).collect();
    let fit = sgd(weights, base.bias, new_v, &data, hyperparams, seed)?;
    Ok(LinearModel {
        format_version: MODEL_FORMAT_VERSION,
        vocabulary,
        weights: fit.weights,
        bias: fit.bias,
        hyperparams: *hyperparams,
        seed,
        loss_history: fit.loss_history,
    })
}
