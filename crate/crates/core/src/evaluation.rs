//! Macro-F1 scoring, stratified cross-validation, cross-dataset testing and
//! the single-word bias audit.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    train, ClassifierError, Hyperparams, LabeledDataset, Prediction, StanceLabel, StancePredictor,
};
use crate::seed::{derive_indexed, rng};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("class {label} has {count} records, fewer than k = {k}")]
    ClassTooSmall { label: StanceLabel, count: usize, k: usize },
    #[error("dataset {0:?} is empty")]
    EmptyDataset(String),
    #[error("training failed: {0}")]
    Trainer(#[from] ClassifierError),
}

/// Rows are true classes, columns predicted classes, both in
/// [`StanceLabel::index`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn new(counts: [[u64; 3]; 3]) -> Self {
        Self { counts }
    }

    pub fn from_pairs<I: IntoIterator<Item = (StanceLabel, StanceLabel)>>(pairs: I) -> Self {
        let mut cm = Self::default();
        for (t, p) in pairs {
            cm.add(t, p);
        }
        cm
    }

    pub fn add(&mut self, truth: StanceLabel, predicted: StanceLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Per-class F1 = 2TP / (2TP + FP + FN), or 0 when the denominator is 0.
    pub fn per_class_f1(&self) -> [f64; 3] {
        std::array::from_fn(|c| {
            let tp = self.counts[c][c];
            let fp: u64 = (0..3).filter(|&r| r != c).map(|r| self.counts[r][c]).sum();
            let fn_: u64 = (0..3).filter(|&p| p != c).map(|p| self.counts[c][p]).sum();
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        })
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| (0..3).map(|c| self.counts[c][c]).sum::<u64>() as f64 / total as f64)
    }
}

pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    Ok(cm.per_class_f1().iter().sum::<f64>() / 3.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold index of each record, aligned with the dataset.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }
}

/// Shuffles each class with the seed, then deals its records round-robin
/// over the folds. The dealing position carries over from one class to the
/// next (classes in Anti, Pro, Neutral order) so fold totals stay balanced.
pub fn stratified_kfold(dataset: &LabeledDataset, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    let mut by_class: [Vec<usize>; 3] = Default::default();
    for (i, r) in dataset.records.iter().enumerate() {
        by_class[r.label.index()].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(EvalError::ClassTooSmall { label: StanceLabel::from_index(c), count: members.len(), k });
        }
    }
    let mut rng = rng(seed);
    let mut assignment = vec![0; dataset.len()];
    let mut next = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan { k, seed, assignment })
}

/// Something that fits a predictor to a dataset.
pub trait Trainer: Sync {
    fn fit(&self, dataset: &LabeledDataset, seed: u64) -> Result<Box<dyn StancePredictor>, ClassifierError>;
}

/// Trains a [`crate::classifier::LinearModel`] with fixed hyperparameters.
#[derive(Debug, Clone, Default)]
pub struct LinearTrainer {
    pub hyperparams: Hyperparams,
}

impl Trainer for LinearTrainer {
    fn fit(&self, dataset: &LabeledDataset, seed: u64) -> Result<Box<dyn StancePredictor>, ClassifierError> {
        Ok(Box::new(train(dataset, &self.hyperparams, seed)?))
    }
}

/// Looks texts up in its training set; unseen texts get `fallback`.
#[derive(Debug, Clone, Copy)]
pub struct MemorizingTrainer {
    pub fallback: StanceLabel,
}

struct Memorized {
    table: HashMap<Vec<String>, StanceLabel>,
    fallback: StanceLabel,
}

fn one_hot(label: StanceLabel) -> Prediction {
    let mut probs = [0.0; 3];
    probs[label.index()] = 1.0;
    Prediction { label, probs }
}

impl StancePredictor for Memorized {
    fn predict_tokens(&self, tokens: &[String]) -> Prediction {
        one_hot(self.table.get(tokens).copied().unwrap_or(self.fallback))
    }
}

impl Trainer for MemorizingTrainer {
    fn fit(&self, dataset: &LabeledDataset, _seed: u64) -> Result<Box<dyn StancePredictor>, ClassifierError> {
        let mut table = HashMap::new();
        for r in &dataset.records {
            table.entry(crate::textproc::tokenize(&r.text)).or_insert(r.label);
        }
        Ok(Box::new(Memorized { table, fallback: self.fallback }))
    }
}

/// Always predicts one class.
#[derive(Debug, Clone, Copy)]
pub struct ConstantTrainer(pub StanceLabel);

struct Constant(StanceLabel);

impl StancePredictor for Constant {
    fn predict_tokens(&self, _tokens: &[String]) -> Prediction {
        one_hot(self.0)
    }
}

impl Trainer for ConstantTrainer {
    fn fit(&self, _dataset: &LabeledDataset, _seed: u64) -> Result<Box<dyn StancePredictor>, ClassifierError> {
        Ok(Box::new(Constant(self.0)))
    }
}

pub fn confusion_on(predictor: &dyn StancePredictor, dataset: &LabeledDataset) -> ConfusionMatrix {
    let predicted: Vec<StanceLabel> = dataset.records.par_iter().map(|r| predictor.predict(&r.text).label).collect();
    ConfusionMatrix::from_pairs(dataset.records.iter().map(|r| r.label).zip(predicted))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation of the fold scores.
    pub std: f64,
}

/// Trains on k-1 folds and scores the held-out fold, for every fold.
///
/// Fold `f` trains with seed `derive_indexed(seed, "fold", f)`; folds run in
/// parallel and the report is in fold order.
pub fn cross_validate(
    dataset: &LabeledDataset,
    k: usize,
    seed: u64,
    trainer: &dyn Trainer,
) -> Result<CvReport, EvalError> {
    let plan = stratified_kfold(dataset, k, seed)?;
    let fold_scores = (0..k)
        .into_par_iter()
        .map(|f| {
            let train_ds = dataset.subset(format!("{}-train-{f}", dataset.name), &plan.train_indices(f));
            let test_ds = dataset.subset(format!("{}-test-{f}", dataset.name), &plan.test_indices(f));
            let model = trainer.fit(&train_ds, derive_indexed(seed, "fold", f as u64))?;
            macro_f1(&confusion_on(model.as_ref(), &test_ds))
        })
        .collect::<Result<Vec<f64>, EvalError>>()?;
    let mean = fold_scores.iter().sum::<f64>() / k as f64;
    let var = fold_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    Ok(CvReport { k, seed, fold_scores, mean, std: var.sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossDatasetReport {
    pub train: String,
    pub test: String,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

/// Trains on all of `train_ds` and scores all of `test_ds` once.
pub fn cross_dataset_eval(
    train_ds: &LabeledDataset,
    test_ds: &LabeledDataset,
    trainer: &dyn Trainer,
    seed: u64,
) -> Result<CrossDatasetReport, EvalError> {
    for ds in [train_ds, test_ds] {
        if ds.is_empty() {
            return Err(EvalError::EmptyDataset(ds.name.clone()));
        }
    }
    let model = trainer.fit(train_ds, seed)?;
    let confusion = confusion_on(model.as_ref(), test_ds);
    Ok(CrossDatasetReport {
        train: train_ds.name.clone(),
        test: test_ds.name.clone(),
        macro_f1: macro_f1(&confusion)?,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedWord {
    pub word: String,
    pub label: StanceLabel,
    pub probs: [f64; 3],
}

impl FlaggedWord {
    fn stance_strength(&self) -> f64 {
        self.probs[0].max(self.probs[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordAudit {
    pub checked: usize,
    /// Sorted by descending max(p_anti, p_pro), then by word.
    pub flagged: Vec<FlaggedWord>,
}

/// Classifies each term as a one-token document and flags the terms whose
/// label is Anti or Pro.
pub fn spcpd_word_audit(predictor: &dyn StancePredictor, terms: &[String]) -> WordAudit {
    let mut flagged: Vec<FlaggedWord> = terms
        .par_iter()
        .filter_map(|t| {
            let p = predictor.predict_tokens(std::slice::from_ref(t));
            (p.label != StanceLabel::Neutral).then(|| FlaggedWord { word: t.clone(), label: p.label, probs: p.probs })
        })
        .collect();
    flagged.sort_by(|a, b| b.stance_strength().total_cmp(&a.stance_strength()).then_with(|| a.word.cmp(&b.word)));
    WordAudit { checked: terms.len(), flagged }
}

pub fn write_fold_csv<W: Write>(report: &CvReport, writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["fold", "macro_f1"])?;
    for (f, s) in report.fold_scores.iter().enumerate() {
        w.write_record([f.to_string(), format!("{s:.6}")])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub mean: f64,
    pub std: f64,
    pub k: usize,
    pub seed: u64,
}

impl From<&CvReport> for CvSummary {
    fn from(r: &CvReport) -> Self {
        Self { mean: r.mean, std: r.std, k: r.k, seed: r.seed }
    }
}

pub fn write_word_audit_csv<W: Write>(audit: &WordAudit, writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["word", "label", "p_anti", "p_pro", "p_neutral"])?;
    for f in &audit.flagged {
        w.write_record([
            f.word.clone(),
            f.label.as_str().to_string(),
            format!("{:.6}", f.probs[0]),
            format!("{:.6}", f.probs[1]),
            format!("{:.6}", f.probs[2]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
