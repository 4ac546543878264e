use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{TopicError, TopicModel};

pub const DEFAULT_ASSIGN_THRESHOLD: f64 = 0.4;
pub const DEFAULT_ANTI_MERGE: &str = include_str!("../../configs/merge_anti.toml");
pub const DEFAULT_PRO_MERGE: &str = include_str!("../../configs/merge_pro.toml");

/// A model topic, by index or by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopicRef {
    Id(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeEntry {
    pub name: String,
    pub members: Vec<TopicRef>,
}

/// Final topics as unions of model topics; unlisted topics are discarded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    #[serde(default = "default_threshold")]
    pub assign_threshold: f64,
    #[serde(rename = "merge")]
    pub entries: Vec<MergeEntry>,
}

fn default_threshold() -> f64 {
    DEFAULT_ASSIGN_THRESHOLD
}

impl MergeConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, TopicError> {
        toml::from_str(text).map_err(|e| TopicError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, TopicError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TopicError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn default_anti() -> Self {
        Self::from_toml_str(DEFAULT_ANTI_MERGE).expect("bundled merge config is valid")
    }

    pub fn default_pro() -> Self {
        Self::from_toml_str(DEFAULT_PRO_MERGE).expect("bundled merge config is valid")
    }

    /// Every model topic kept as its own final topic.
    pub fn identity(model: &TopicModel, assign_threshold: f64) -> Self {
        let entries = model
            .topic_names
            .iter()
            .enumerate()
            .map(|(i, n)| MergeEntry { name: n.clone(), members: vec![TopicRef::Id(i)] })
            .collect();
        Self { assign_threshold, entries }
    }

    fn resolve(&self, model: &TopicModel) -> Result<Vec<Vec<usize>>, TopicError> {
        let by_name: HashMap<&str, usize> =
            model.topic_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut used = BTreeSet::new();
        let mut names = BTreeSet::new();
        let mut out = Vec::new();
        for e in &self.entries {
            if !names.insert(e.name.as_str()) {
                return Err(TopicError::Config(format!("merged topic {:?} defined twice", e.name)));
            }
            if e.members.is_empty() {
                return Err(TopicError::Config(format!("merged topic {:?} has no members", e.name)));
            }
            let mut ids = Vec::new();
            for m in &e.members {
                let id = match m {
                    TopicRef::Id(i) if *i < model.k() => *i,
                    TopicRef::Name(n) if by_name.contains_key(n.as_str()) => by_name[n.as_str()],
                    other => return Err(TopicError::Config(format!("unknown topic {other:?} in {:?}", e.name))),
                };
                if !used.insert(id) {
                    return Err(TopicError::Config(format!("topic {id} appears in more than one merge list")));
                }
                ids.push(id);
            }
            out.push(ids);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedTopic {
    pub name: String,
    pub members: Vec<usize>,
    pub top_words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocAssignment {
    pub doc_id: String,
    /// Index into [`TopicReport::topics`], or `None` when unassigned.
    pub topic: Option<usize>,
    /// Merged-topic mass of the best merged topic.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicReport {
    pub topics: Vec<MergedTopic>,
    pub assignments: Vec<DocAssignment>,
    pub assign_threshold: f64,
}

impl TopicReport {
    pub fn topic_name(&self, a: &DocAssignment) -> Option<&str> {
        a.topic.map(|t| self.topics[t].name.as_str())
    }

    /// Fraction of documents assigned to some merged topic.
    pub fn coverage(&self) -> f64 {
        if self.assignments.is_empty() {
            return 0.0;
        }
        self.assignments.iter().filter(|a| a.topic.is_some()).count() as f64 / self.assignments.len() as f64
    }
}

/// Sums each document's theta over the members of every merged topic and
/// assigns the document to the heaviest one if its mass reaches the
/// threshold.
pub fn apply_merge(model: &TopicModel, config: &MergeConfig, top_n: usize) -> Result<TopicReport, TopicError> {
    if !(0.0..=1.0).contains(&config.assign_threshold) {
        return Err(TopicError::Config(format!("assign_threshold {} outside [0, 1]", config.assign_threshold)));
    }
    let groups = config.resolve(model)?;
    let topics = config
        .entries
        .iter()
        .zip(&groups)
        .map(|(e, members)| {
            let v = model.terms.len();
            let mut mean = vec![0.0; v];
            for &m in members {
                for (acc, p) in mean.iter_mut().zip(&model.phi[m]) {
                    *acc += p / members.len() as f64;
                }
            }
            let mut ids: Vec<usize> = (0..v).collect();
            ids.sort_by(|&a, &b| mean[b].total_cmp(&mean[a]).then(a.cmp(&b)));
            let top_words = ids.into_iter().take(top_n).map(|i| model.terms[i].clone()).collect();
            MergedTopic { name: e.name.clone(), members: members.clone(), top_words }
        })
        .collect();
    let assignments = model
        .doc_ids
        .iter()
        .zip(&model.theta)
        .map(|(id, theta)| {
            let mut best: Option<(usize, f64)> = None;
            for (g, members) in groups.iter().enumerate() {
                let mass: f64 = members.iter().map(|&m| theta[m]).sum();
                if best.is_none_or(|(_, b)| mass > b) {
                    best = Some((g, mass));
                }
            }
            match best {
                Some((g, mass)) if mass >= config.assign_threshold => {
                    DocAssignment { doc_id: id.clone(), topic: Some(g), mass }
                }
                Some((_, mass)) => DocAssignment { doc_id: id.clone(), topic: None, mass },
                None => DocAssignment { doc_id: id.clone(), topic: None, mass: 0.0 },
            }
        })
        .collect();
    Ok(TopicReport { topics, assignments, assign_threshold: config.assign_threshold })
}

/// Percentage of each period's assigned documents falling in each merged
/// topic. Rows follow `periods`; periods without assigned documents are
/// left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodTopicTable {
    pub topics: Vec<String>,
    pub periods: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    pub percent: Vec<Vec<f64>>,
}

pub fn period_topic_distribution(
    report: &TopicReport,
    period_of: &HashMap<&str, &str>,
    periods: &[String],
) -> Result<PeriodTopicTable, TopicError> {
    let pos: HashMap<&str, usize> = periods.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let mut counts = vec![vec![0usize; report.topics.len()]; periods.len()];
    for a in &report.assignments {
        let Some(t) = a.topic else { continue };
        let p = period_of
            .get(a.doc_id.as_str())
            .and_then(|p| pos.get(p))
            .ok_or_else(|| TopicError::MissingPeriod(a.doc_id.clone()))?;
        counts[*p][t] += 1;
    }
    let mut table = PeriodTopicTable {
        topics: report.topics.iter().map(|t| t.name.clone()).collect(),
        periods: Vec::new(),
        counts: Vec::new(),
        percent: Vec::new(),
    };
    for (name, row) in periods.iter().zip(counts) {
        let total: usize = row.iter().sum();
        if total == 0 {
            warn!("period {name} has no topic-assigned documents; omitted");
            continue;
        }
        table.percent.push(row.iter().map(|&c| 100.0 * c as f64 / total as f64).collect());
        table.periods.push(name.clone());
        table.counts.push(row);
    }
    Ok(table)
}

pub fn write_assignments_csv<W: Write>(report: &TopicReport, writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["tweet_id", "topic", "p_mass"])?;
    for a in &report.assignments {
        w.write_record([a.doc_id.as_str(), report.topic_name(a).unwrap_or("unassigned"), &format!("{:.6}", a.mass)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_period_table_csv<W: Write>(table: &PeriodTopicTable, writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["period", "topic", "percent"])?;
    for (p, row) in table.periods.iter().zip(&table.percent) {
        for (t, pct) in table.topics.iter().zip(row) {
            w.write_record([p.as_str(), t.as_str(), &format!("{pct:.6}")])?;
        }
    }
    w.flush()?;
    Ok(())
}
