use std::collections::btree_map::Entry;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use log::warn;
use serde::Deserialize;

use super::{ClassifierError, Prediction, Predictions};

/// Fraction of records that may be rejected before loading aborts.
pub const MAX_REJECTED_FRACTION: f64 = 0.05;
const SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedScore {
    pub line: usize,
    pub reason: String,
}

/// Per-tweet probabilities produced outside this crate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalScores {
    pub predictions: Predictions,
    pub rejected: Vec<RejectedScore>,
    pub duplicates: usize,
}

impl ExternalScores {
    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Prediction> {
        self.predictions.get(id)
    }

    pub fn into_predictions(self) -> Predictions {
        self.predictions
    }
}

#[derive(Deserialize)]
struct ScoreRecord {
    id: String,
    p_anti: f64,
    p_pro: f64,
    p_neutral: f64,
}

fn validate(probs: [f64; 3]) -> Result<[f64; 3], String> {
    if probs.iter().any(|p| !p.is_finite()) {
        return Err("non-finite probability".into());
    }
    if probs.iter().any(|&p| p < 0.0) {
        return Err("negative probability".into());
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(format!("probabilities sum to {sum}"));
    }
    Ok(probs.map(|p| p / sum))
}

/// Parses newline-delimited `{id, p_anti, p_pro, p_neutral}` records.
///
/// Invalid records are skipped with a warning; the first record wins when
/// an id repeats. Blank lines are ignored.
pub fn parse_external_scores<R: Read>(reader: R, source: &str) -> Result<ExternalScores, ClassifierError> {
    let mut scores = ExternalScores::default();
    let mut total = 0usize;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| ClassifierError::Io { path: source.to_string(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let line_no = i + 1;
        let parsed = serde_json::from_str::<ScoreRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| validate([r.p_anti, r.p_pro, r.p_neutral]).map(|p| (r.id, p)));
        match parsed {
            Ok((id, probs)) => match scores.predictions.entry(id) {
                Entry::Occupied(_) => scores.duplicates += 1,
                Entry::Vacant(slot) => {
                    slot.insert(Prediction::from_probs(probs));
                }
            },
            Err(reason) => {
                warn!("{source}: line {line_no}: rejected score record: {reason}");
                scores.rejected.push(RejectedScore { line: line_no, reason });
            }
        }
    }
    if total > 0 && scores.rejected.len() as f64 > MAX_REJECTED_FRACTION * total as f64 {
        return Err(ClassifierError::TooManyRejected {
            path: source.to_string(),
            rejected: scores.rejected.len(),
            total,
        });
    }
    Ok(scores)
}

pub fn load_external_scores(path: &Path) -> Result<ExternalScores, ClassifierError> {
    let file =
        std::fs::File::open(path).map_err(|source| ClassifierError::Io { path: path.display().to_string(), source })?;
    parse_external_scores(file, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::StanceLabel;

    fn record(id: usize, p: [f64; 3]) -> String {
        format!(r#"{{"id":"t{id}","p_anti":{},"p_pro":{},"p_neutral":{}}}"#, p[0], p[1], p[2])
    }

    #[test]
    fn argmax_and_rejection() {
        let text = [record(1, [0.8, 0.1, 0.1]), record(2, [0.2, 0.2, 0.2])].join("\n");
        // 1 of 2 rejected exceeds the 5% budget
        assert!(matches!(
            parse_external_scores(text.as_bytes(), "mem"),
            Err(ClassifierError::TooManyRejected { rejected: 1, total: 2, .. })
        ));
        let mut lines: Vec<String> = (0..40).map(|i| record(i, [0.1, 0.1, 0.8])).collect();
        lines.push(record(99, [0.2, 0.2, 0.2]));
        lines.push(record(100, [0.8, 0.1, 0.1]));
        let scores = parse_external_scores(lines.join("\n").as_bytes(), "mem").unwrap();
        assert_eq!(scores.len(), 41);
        assert_eq!(scores.rejected.len(), 1);
        assert_eq!(scores.rejected[0].line, 41);
        assert_eq!(scores.get("t100").unwrap().label, StanceLabel::Anti);
        assert!(scores.get("t99").is_none());
    }

    #[test]
    fn hundred_valid_records() {
        let lines: Vec<String> = (0..100).map(|i| record(i, [0.3, 0.5, 0.2])).collect();
        let scores = parse_external_scores(lines.join("\n").as_bytes(), "mem").unwrap();
        assert_eq!(scores.len(), 100);
        assert!(scores.rejected.is_empty());
        for p in scores.predictions.values() {
            assert_eq!(p.label, StanceLabel::Pro);
            assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn malformed_and_negative_rejected() {
        let mut lines: Vec<String> = (0..100).map(|i| record(i, [0.3, 0.5, 0.2])).collect();
        lines.push("not json".into());
        lines.push(record(200, [-0.1, 0.6, 0.5]));
        lines.push(record(0, [0.9, 0.05, 0.05]));
        let scores = parse_external_scores(lines.join("\n").as_bytes(), "mem").unwrap();
        assert_eq!(scores.rejected.len(), 2);
        assert_eq!(scores.duplicates, 1);
        assert_eq!(scores.get("t0").unwrap().label, StanceLabel::Pro);
    }

    #[test]
    fn near_unit_sums_are_renormalized() {
        let scores = parse_external_scores(record(1, [0.5004, 0.3, 0.2]).as_bytes(), "mem").unwrap();
        let p = scores.get("t1").unwrap();
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
