use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, StanceLabel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub id: String,
    pub text: String,
    pub label: StanceLabel,
}

/// Named collection of labeled tweets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledDataset {
    pub name: String,
    pub records: Vec<LabeledRecord>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, records: Vec<LabeledRecord>) -> Self {
        Self { name: name.into(), records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record counts indexed by [`StanceLabel::index`].
    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for r in &self.records {
            counts[r.label.index()] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<StanceLabel> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Records at the given positions, in that order.
    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Self {
        Self::new(name, indices.iter().map(|&i| self.records[i].clone()).collect())
    }

    /// CSV with header `id,text,label`, labels `anti|pro|neutral`.
    pub fn from_csv_reader<R: Read>(name: impl Into<String>, reader: R, source: &str) -> Result<Self, ClassifierError> {
        #[derive(Deserialize)]
        struct Row {
            id: String,
            text: String,
            label: String,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let mut records = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| ClassifierError::Parse {
                path: source.to_string(),
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let label = row.label.parse()?;
            records.push(LabeledRecord { id: row.id, text: row.text, label });
        }
        Ok(Self::new(name, records))
    }

    pub fn from_csv(path: &Path) -> Result<Self, ClassifierError> {
        let file = std::fs::File::open(path)
            .map_err(|source| ClassifierError::Io { path: path.display().to_string(), source })?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_csv_reader(name, file, &path.display().to_string())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "text", "label"])?;
        for r in &self.records {
            w.write_record([r.id.as_str(), r.text.as_str(), r.label.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A tweet with one label from each of three annotators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationTriple {
    pub id: String,
    pub text: String,
    pub labels: [StanceLabel; 3],
}

impl AnnotationTriple {
    /// CSV with header `id,text,label_1,label_2,label_3`.
    pub fn read_csv<R: Read>(reader: R, source: &str) -> Result<Vec<Self>, ClassifierError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut out = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ClassifierError::Parse {
                path: source.to_string(),
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != 5 {
                return Err(ClassifierError::Parse {
                    path: source.to_string(),
                    line,
                    message: format!("expected 5 fields, found {}", rec.len()),
                });
            }
            out.push(Self {
                id: rec[0].to_string(),
                text: rec[1].to_string(),
                labels: [rec[2].parse()?, rec[3].parse()?, rec[4].parse()?],
            });
        }
        Ok(out)
    }

    /// The label at least two annotators chose, and whether all three did.
    pub fn agreement(&self) -> Option<(StanceLabel, bool)> {
        let [a, b, c] = self.labels;
        if a == b && b == c {
            Some((a, true))
        } else if a == b || a == c {
            Some((a, false))
        } else if b == c {
            Some((b, false))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgreementMode {
    /// At least two of three annotators agree.
    Majority,
    /// All three agree.
    Unanimous,
}

#[derive(Debug, Clone)]
pub struct AnnotationResolution {
    pub dataset: LabeledDataset,
    pub unanimous: usize,
    pub majority_only: usize,
    /// Records where all three annotators disagreed.
    pub dropped: usize,
}

pub fn resolve_annotations(triples: &[AnnotationTriple], mode: AgreementMode, name: &str) -> AnnotationResolution {
    let mut records = Vec::new();
    let (mut unanimous, mut majority_only, mut dropped) = (0, 0, 0);
    for t in triples {
        match t.agreement() {
            Some((label, true)) => {
                unanimous += 1;
                records.push(LabeledRecord { id: t.id.clone(), text: t.text.clone(), label });
            }
            Some((label, false)) => {
                majority_only += 1;
                if mode == AgreementMode::Majority {
                    records.push(LabeledRecord { id: t.id.clone(), text: t.text.clone(), label });
                }
            }
            None => dropped += 1,
        }
    }
    AnnotationResolution { dataset: LabeledDataset::new(name, records), unanimous, majority_only, dropped }
}

#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub dataset: LabeledDataset,
    /// Ids present in both inputs; the base record was kept.
    pub collisions: Vec<String>,
}

/// Concatenates `extra` onto `base`, keeping the base record on id collisions.
pub fn merge_datasets(base: &LabeledDataset, extra: &LabeledDataset) -> MergeOutcome {
    let base_ids: HashSet<&str> = base.records.iter().map(|r| r.id.as_str()).collect();
    let mut records = base.records.clone();
    let mut collisions = Vec::new();
    for r in &extra.records {
        if base_ids.contains(r.id.as_str()) {
            collisions.push(r.id.clone());
        } else {
            records.push(r.clone());
        }
    }
    if !collisions.is_empty() {
        warn!("merging {} into {}: {} id collisions kept from base", extra.name, base.name, collisions.len());
    }
    let name = if extra.is_empty() { base.name.clone() } else { format!("{} + {}", base.name, extra.name) };
    MergeOutcome { dataset: LabeledDataset::new(name, records), collisions }
}
