use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::Hyperparams;
use crate::corpus::{InputFormat, PeriodSet, PeriodSpec};
use crate::neighbors::{Averaging, DenominatorMode, DEFAULT_RESAMPLES, MIN_RESAMPLES};
use crate::stancechange::{DEFAULT_ACTIVE_THRESHOLD, DEFAULT_BOT_THRESHOLD, DEFAULT_GROUP_SAMPLE};
use crate::topics::{SelectionMetric, TopicModelParams};
use crate::userstance::AggregationParams;

use super::PipelineError;

/// Input files. Relative paths are resolved against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub tweets: PathBuf,
    #[serde(default)]
    pub format: InputFormat,
    pub keywords: Option<PathBuf>,
    /// Labeled training tweets, `id,text,label`.
    pub labels: Option<PathBuf>,
    /// Second-stage training set used to warm-start the model.
    pub warm_start_labels: Option<PathBuf>,
    /// Precomputed per-tweet probabilities; replaces training when set.
    pub external_scores: Option<PathBuf>,
    pub bot_scores: Option<PathBuf>,
    pub whitelist: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub following: Option<PathBuf>,
    /// Larger collection the tweets were drawn from, for the sampling audits.
    pub reference_tweets: Option<PathBuf>,
    pub anti_seeds: Option<PathBuf>,
    pub pro_seeds: Option<PathBuf>,
    pub anti_merge: Option<PathBuf>,
    pub pro_merge: Option<PathBuf>,
    pub vaccines: Option<PathBuf>,
}

impl InputPaths {
    fn all(&self) -> Vec<(&'static str, &PathBuf)> {
        let opt = [
            ("keywords", &self.keywords),
            ("labels", &self.labels),
            ("warm_start_labels", &self.warm_start_labels),
            ("external_scores", &self.external_scores),
            ("bot_scores", &self.bot_scores),
            ("whitelist", &self.whitelist),
            ("metadata", &self.metadata),
            ("following", &self.following),
            ("reference_tweets", &self.reference_tweets),
            ("anti_seeds", &self.anti_seeds),
            ("pro_seeds", &self.pro_seeds),
            ("anti_merge", &self.anti_merge),
            ("pro_merge", &self.pro_merge),
            ("vaccines", &self.vaccines),
        ];
        std::iter::once(("tweets", &self.tweets))
            .chain(opt.into_iter().filter_map(|(n, p)| p.as_ref().map(|p| (n, p))))
            .collect()
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.tweets);
        for p in [
            &mut self.keywords,
            &mut self.labels,
            &mut self.warm_start_labels,
            &mut self.external_scores,
            &mut self.bot_scores,
            &mut self.whitelist,
            &mut self.metadata,
            &mut self.following,
            &mut self.reference_tweets,
            &mut self.anti_seeds,
            &mut self.pro_seeds,
            &mut self.anti_merge,
            &mut self.pro_merge,
            &mut self.vaccines,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub min_df: u32,
    pub warm_start_epochs: usize,
    pub cv_folds: usize,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let hp = Hyperparams::default();
        Self {
            learning_rate: hp.learning_rate,
            epochs: hp.epochs,
            l2: hp.l2,
            min_df: hp.min_df,
            warm_start_epochs: hp.epochs,
            cv_folds: 5,
        }
    }
}

impl ClassifierSection {
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams { learning_rate: self.learning_rate, epochs: self.epochs, l2: self.l2, min_df: self.min_df }
    }

    pub fn warm_start_hyperparams(&self) -> Hyperparams {
        Hyperparams { epochs: self.warm_start_epochs, ..self.hyperparams() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicsSection {
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub sample_lag: usize,
    pub min_df: u32,
    pub top_n: usize,
    /// Candidate topic counts for the exploratory LDA fit; empty skips it.
    pub select_k: Vec<usize>,
    pub selection_metric: SelectionMetric,
}

impl Default for TopicsSection {
    fn default() -> Self {
        let p = TopicModelParams::new(1, 0);
        Self {
            alpha: p.alpha,
            beta: p.beta,
            iterations: p.iterations,
            burn_in: p.burn_in,
            sample_lag: p.sample_lag,
            min_df: 2,
            top_n: 10,
            select_k: Vec::new(),
            selection_metric: SelectionMetric::Coherence,
        }
    }
}

impl TopicsSection {
    pub fn params(&self, seed: u64) -> TopicModelParams {
        TopicModelParams {
            k: 1,
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.iterations,
            burn_in: self.burn_in,
            sample_lag: self.sample_lag,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChangesSection {
    pub bot_threshold: f64,
    pub active_threshold: usize,
    pub group_sample: usize,
}

impl Default for ChangesSection {
    fn default() -> Self {
        Self {
            bot_threshold: DEFAULT_BOT_THRESHOLD,
            active_threshold: DEFAULT_ACTIVE_THRESHOLD,
            group_sample: DEFAULT_GROUP_SAMPLE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborsSection {
    pub resamples: usize,
    pub denominator: DenominatorMode,
    pub averaging: Averaging,
}

impl Default for NeighborsSection {
    fn default() -> Self {
        Self { resamples: DEFAULT_RESAMPLES, denominator: DenominatorMode::default(), averaging: Averaging::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub popularity_thresholds: Vec<u64>,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self { popularity_thresholds: vec![1, 10, 100] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub master_seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub inputs: InputPaths,
    /// Analysis periods; the three vaccine-study periods when empty.
    #[serde(default, rename = "period")]
    pub periods: Vec<PeriodSpec>,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub users: AggregationParams,
    #[serde(default)]
    pub topics: TopicsSection,
    #[serde(default)]
    pub changes: ChangesSection,
    #[serde(default)]
    pub neighbors: NeighborsSection,
    #[serde(default)]
    pub audit: AuditSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    /// Parses the config and resolves relative paths against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Validation(format!("config: {e}")))?;
        cfg.inputs.resolve(base);
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn period_set(&self) -> Result<PeriodSet, PipelineError> {
        if self.periods.is_empty() {
            Ok(PeriodSet::vaccine_study())
        } else {
            PeriodSet::from_specs(&self.periods).map_err(|e| PipelineError::Validation(e.to_string()))
        }
    }

    /// Checks parameters and that every referenced input exists.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Validation(m));
        for (name, path) in self.inputs.all() {
            if !path.is_file() {
                return bad(format!("input {name}: {} does not exist", path.display()));
            }
        }
        if self.inputs.labels.is_none() && self.inputs.external_scores.is_none() {
            return bad("either inputs.labels or inputs.external_scores is required".into());
        }
        self.period_set()?;
        self.classifier.hyperparams().validate(false).map_err(|e| PipelineError::Validation(e.to_string()))?;
        self.classifier
            .warm_start_hyperparams()
            .validate(true)
            .map_err(|e| PipelineError::Validation(e.to_string()))?;
        if self.classifier.cv_folds < 2 {
            return bad("classifier.cv_folds must be >= 2".into());
        }
        self.users.validate().map_err(|e| PipelineError::Validation(e.to_string()))?;
        let mut p = self.topics.params(0);
        p.k = 2;
        p.validate().map_err(|e| PipelineError::Validation(e.to_string()))?;
        if self.topics.top_n < 2 || self.topics.min_df == 0 {
            return bad("topics.top_n must be >= 2 and topics.min_df >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.changes.bot_threshold) {
            return bad(format!("changes.bot_threshold {} outside [0, 1]", self.changes.bot_threshold));
        }
        if self.neighbors.resamples < MIN_RESAMPLES {
            return bad(format!("neighbors.resamples must be >= {MIN_RESAMPLES}"));
        }
        let t = &self.audit.popularity_thresholds;
        if t.is_empty() || t.windows(2).any(|w| w[0] >= w[1]) {
            return bad("audit.popularity_thresholds must be non-empty and strictly ascending".into());
        }
        Ok(())
    }
}
