//! Per-user, per-period stances from per-tweet labels.
//!
//! A user is an Anti-Vaxxer in a period when they posted at least
//! `min_tweets` stance-labeled tweets there and strictly more than `tau` of
//! them are Anti; likewise for Pro. Neutral tweets count in the denominator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Predictions, StanceLabel};
use crate::corpus::{Partition, Tweet};
use crate::seed::rng;

#[derive(Debug, Error)]
pub enum UserStanceError {
    #[error("invalid aggregation parameters: {0}")]
    InvalidParams(String),
    #[error("{} tweets have no stance prediction (first: {})", .0.len(), .0.iter().take(5).cloned().collect::<Vec<_>>().join(", "))]
    MissingPredictions(Vec<String>),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationParams {
    pub min_tweets: usize,
    pub tau: f64,
}

impl Default for AggregationParams {
    fn default() -> Self {
        Self { min_tweets: 3, tau: 0.7 }
    }
}

impl AggregationParams {
    pub fn validate(&self) -> Result<(), UserStanceError> {
        if self.min_tweets == 0 {
            return Err(UserStanceError::InvalidParams("min_tweets must be >= 1".into()));
        }
        if !(self.tau > 0.5 && self.tau <= 1.0) {
            return Err(UserStanceError::InvalidParams(format!("tau must be in (0.5, 1], got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UserStance {
    AntiVaxxer,
    ProVaxxer,
    Unidentified,
}

impl UserStance {
    pub fn as_str(self) -> &'static str {
        match self {
            UserStance::AntiVaxxer => "anti-vaxxer",
            UserStance::ProVaxxer => "pro-vaxxer",
            UserStance::Unidentified => "unidentified",
        }
    }
}

impl fmt::Display for UserStance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub anti: usize,
    pub pro: usize,
    pub neutral: usize,
}

impl LabelCounts {
    pub fn from_labels(labels: &[StanceLabel]) -> Self {
        let mut c = Self::default();
        for &l in labels {
            c.add(l);
        }
        c
    }

    pub fn add(&mut self, label: StanceLabel) {
        match label {
            StanceLabel::Anti => self.anti += 1,
            StanceLabel::Pro => self.pro += 1,
            StanceLabel::Neutral => self.neutral += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.anti + self.pro + self.neutral
    }
}

/// Applies the threshold rule to label counts. `params` must be valid.
pub fn aggregate_counts(counts: LabelCounts, params: &AggregationParams) -> UserStance {
    let n = counts.total();
    if n < params.min_tweets {
        return UserStance::Unidentified;
    }
    let n = n as f64;
    if counts.anti as f64 / n > params.tau {
        UserStance::AntiVaxxer
    } else if counts.pro as f64 / n > params.tau {
        UserStance::ProVaxxer
    } else {
        UserStance::Unidentified
    }
}

pub fn aggregate_user_stance(labels: &[StanceLabel], params: &AggregationParams) -> UserStance {
    aggregate_counts(LabelCounts::from_labels(labels), params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPeriodProfile {
    pub user_id: String,
    pub period: String,
    pub counts: LabelCounts,
    pub stance: UserStance,
}

/// One profile per (user, period) with at least one tweet, sorted by
/// user id and then by period order.
pub fn build_profiles(
    partition: &Partition,
    predictions: &Predictions,
    params: &AggregationParams,
) -> Result<Vec<UserPeriodProfile>, UserStanceError> {
    params.validate()?;
    let mut missing = Vec::new();
    let mut counts: BTreeMap<(&str, usize), LabelCounts> = BTreeMap::new();
    for (pi, (_, corpus)) in partition.periods.iter().enumerate() {
        for t in corpus.tweets() {
            match predictions.get(&t.id) {
                Some(p) => counts.entry((t.user_id.as_str(), pi)).or_default().add(p.label),
                None => missing.push(t.id.clone()),
            }
        }
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(UserStanceError::MissingPredictions(missing));
    }
    Ok(counts
        .into_iter()
        .map(|((user, pi), c)| UserPeriodProfile {
            user_id: user.to_string(),
            period: partition.periods[pi].0.clone(),
            counts: c,
            stance: aggregate_counts(c, params),
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceSummaryRow {
    pub period: String,
    pub anti_vaxxers: usize,
    pub pro_vaxxers: usize,
    /// Only users with at least `min_tweets` tweets in the period.
    pub unidentified: usize,
}

/// Per-period user counts, one row per entry of `periods` in that order.
pub fn stance_summary(
    profiles: &[UserPeriodProfile],
    periods: &[String],
    params: &AggregationParams,
) -> Vec<StanceSummaryRow> {
    periods
        .iter()
        .map(|period| {
            let mut row = StanceSummaryRow { period: period.clone(), ..Default::default() };
            for p in profiles.iter().filter(|p| &p.period == period) {
                match p.stance {
                    UserStance::AntiVaxxer => row.anti_vaxxers += 1,
                    UserStance::ProVaxxer => row.pro_vaxxers += 1,
                    UserStance::Unidentified if p.counts.total() >= params.min_tweets => row.unidentified += 1,
                    UserStance::Unidentified => {}
                }
            }
            row
        })
        .collect()
}

/// Stance per (user, period), for lookups by later stages.
pub fn stance_index(profiles: &[UserPeriodProfile]) -> BTreeMap<(String, String), UserStance> {
    profiles.iter().map(|p| ((p.user_id.clone(), p.period.clone()), p.stance)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewBundle {
    pub user_id: String,
    pub period: String,
    pub stance: UserStance,
    pub counts: LabelCounts,
    pub tweets: Vec<Tweet>,
}

/// Uniform sample without replacement of the profiles with `stance`
/// (restricted to `period` when given), with each sampled user's tweets
/// from that period. Returns the whole group, with a warning, when it has
/// fewer than `n` members.
pub fn sample_for_review(
    profiles: &[UserPeriodProfile],
    partition: &Partition,
    stance: UserStance,
    period: Option<&str>,
    n: usize,
    seed: u64,
) -> Vec<ReviewBundle> {
    let group: Vec<&UserPeriodProfile> =
        profiles.iter().filter(|p| p.stance == stance && period.is_none_or(|q| p.period == q)).collect();
    let chosen: Vec<&UserPeriodProfile> = if group.len() <= n {
        if group.len() < n {
            warn!("review group {stance} has {} members, fewer than the {n} requested", group.len());
        }
        group
    } else {
        let mut idx = sample(&mut rng(seed), group.len(), n).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| group[i]).collect()
    };
    let wanted: BTreeSet<(&str, &str)> = chosen.iter().map(|p| (p.user_id.as_str(), p.period.as_str())).collect();
    let mut tweets: BTreeMap<(&str, &str), Vec<Tweet>> = BTreeMap::new();
    for (name, corpus) in &partition.periods {
        for t in corpus.tweets() {
            if wanted.contains(&(t.user_id.as_str(), name.as_str())) {
                tweets.entry((t.user_id.as_str(), name.as_str())).or_default().push(t.clone());
            }
        }
    }
    chosen
        .into_iter()
        .map(|p| ReviewBundle {
            user_id: p.user_id.clone(),
            period: p.period.clone(),
            stance: p.stance,
            counts: p.counts,
            tweets: tweets.remove(&(p.user_id.as_str(), p.period.as_str())).unwrap_or_default(),
        })
        .collect()
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes one pretty-printed JSON file per bundle into `dir`.
pub fn write_review_bundles(bundles: &[ReviewBundle], dir: &Path) -> Result<Vec<PathBuf>, UserStanceError> {
    let io = |path: &Path, source| UserStanceError::Io { path: path.display().to_string(), source };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut paths = Vec::new();
    for b in bundles {
        let path = dir.join(format!("{}_{}.json", file_safe(&b.user_id), file_safe(&b.period)));
        let json = serde_json::to_vec_pretty(b).expect("bundle serializes");
        std::fs::write(&path, json).map_err(|e| io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn write_profiles_csv<W: Write>(profiles: &[UserPeriodProfile], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "period", "n_anti", "n_pro", "n_neutral", "stance"])?;
    for p in profiles {
        w.write_record([
            p.user_id.clone(),
            p.period.clone(),
            p.counts.anti.to_string(),
            p.counts.pro.to_string(),
            p.counts.neutral.to_string(),
            p.stance.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[StanceSummaryRow], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["period", "anti_vaxxers", "pro_vaxxers", "unidentified"])?;
    for r in rows {
        w.write_record([
            r.period.clone(),
            r.anti_vaxxers.to_string(),
            r.pro_vaxxers.to_string(),
            r.unidentified.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
