//! Three-way stance classification.
//!
//! [`LinearModel`] is a multinomial logistic regression over TF-IDF features
//! trained with plain seeded SGD. [`ExternalScores`] lets probabilities
//! computed elsewhere (for example by a fine-tuned transformer) stand in for
//! the model anywhere predictions are consumed.

mod dataset;
mod external;
mod model;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textproc::{tokenize, TextError};

pub use dataset::{
    merge_datasets, resolve_annotations, AgreementMode, AnnotationResolution, AnnotationTriple, LabeledDataset,
    LabeledRecord, MergeOutcome,
};
pub use external::{load_external_scores, parse_external_scores, ExternalScores, RejectedScore, MAX_REJECTED_FRACTION};
pub use model::{loss_and_gradient, softmax, train, warm_start_train, Hyperparams, LinearModel, MODEL_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data must contain at least two classes")]
    SingleClass,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("non-finite loss at epoch {epoch} ({diagnostics})")]
    NonFiniteLoss { epoch: usize, diagnostics: String },
    #[error("unknown stance label {0:?}")]
    UnknownLabel(String),
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{rejected} of {total} score records rejected in {path}")]
    TooManyRejected { path: String, rejected: usize, total: usize },
    #[error("failed to read or write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported model format version {0}")]
    ModelVersion(u32),
    #[error(transparent)]
    Text(#[from] TextError),
}

/// Stance of a single post.
///
/// The declaration order is also the argmax tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceLabel {
    Anti,
    Pro,
    Neutral,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 3] = [StanceLabel::Anti, StanceLabel::Pro, StanceLabel::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Anti => "anti",
            StanceLabel::Pro => "pro",
            StanceLabel::Neutral => "neutral",
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StanceLabel {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "anti" | "anti-vax" => Ok(StanceLabel::Anti),
            "pro" | "pro-vax" => Ok(StanceLabel::Pro),
            "neutral" => Ok(StanceLabel::Neutral),
            _ => Err(ClassifierError::UnknownLabel(s.to_string())),
        }
    }
}

/// Label plus the (Anti, Pro, Neutral) probability triple behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: StanceLabel,
    pub probs: [f64; 3],
}

impl Prediction {
    /// Argmax with ties resolved Anti < Pro < Neutral.
    pub fn from_probs(probs: [f64; 3]) -> Self {
        let mut best = 0;
        for i in 1..3 {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        Self { label: StanceLabel::from_index(best), probs }
    }

    pub fn prob(&self, label: StanceLabel) -> f64 {
        self.probs[label.index()]
    }
}

/// Tweet id → prediction, iterated in id order.
pub type Predictions = BTreeMap<String, Prediction>;

/// Anything that can label a tokenized text.
pub trait StancePredictor: Send + Sync {
    fn predict_tokens(&self, tokens: &[String]) -> Prediction;

    fn predict(&self, text: &str) -> Prediction {
        self.predict_tokens(&tokenize(text))
    }
}

impl<P: StancePredictor + ?Sized> StancePredictor for Box<P> {
    fn predict_tokens(&self, tokens: &[String]) -> Prediction {
        (**self).predict_tokens(tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_parsing_and_order() {
        assert_eq!("Anti".parse::<StanceLabel>().unwrap(), StanceLabel::Anti);
        assert_eq!(" neutral ".parse::<StanceLabel>().unwrap(), StanceLabel::Neutral);
        assert!("maybe".parse::<StanceLabel>().is_err());
        assert!(StanceLabel::Anti < StanceLabel::Pro && StanceLabel::Pro < StanceLabel::Neutral);
    }

    #[test]
    fn argmax_tie_break() {
        assert_eq!(Prediction::from_probs([1.0 / 3.0; 3]).label, StanceLabel::Anti);
        assert_eq!(Prediction::from_probs([0.2, 0.4, 0.4]).label, StanceLabel::Pro);
        assert_eq!(Prediction::from_probs([0.8, 0.1, 0.1]).label, StanceLabel::Anti);
    }
}
