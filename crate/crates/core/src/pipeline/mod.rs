//! Config-driven, cached pipeline over the analysis modules.
//!
//! Stages form a fixed DAG:
//! `ingest -> classify -> users -> topics -> changes -> neighbors -> report`,
//! with `eval` and `audit-bias` as side branches. Every stage writes into
//! `<out>/<stage>/` and records itself in `<out>/manifest.jsonl`. A stage
//! whose inputs hash the same as its last recorded run is skipped.

mod config;
pub mod emit;
pub mod manifest;
mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::info;
use thiserror::Error;

use crate::seed::derive_seed;

pub use config::{
    AuditSection, ChangesSection, ClassifierSection, InputPaths, NeighborsSection, PipelineConfig, TopicsSection,
};
use manifest::{combine, hash_file, list_files, outputs_intact, Manifest, ManifestEntry};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("stage {stage} needs {}: run {} first", .missing.join(", "), .missing.join(", "))]
    MissingDependency { stage: String, missing: Vec<String> },
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Runtime(_) | Self::Io { .. } => 2,
            Self::MissingDependency { .. } => 3,
        }
    }
}

pub(crate) fn runtime<E: fmt::Display>(e: E) -> PipelineError {
    PipelineError::Runtime(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Classify,
    Eval,
    AuditBias,
    Users,
    Topics,
    Changes,
    Neighbors,
    Report,
}

impl Stage {
    /// Execution order used by `run-all`.
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Classify,
        Stage::Eval,
        Stage::AuditBias,
        Stage::Users,
        Stage::Topics,
        Stage::Changes,
        Stage::Neighbors,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Classify => "classify",
            Stage::Eval => "eval",
            Stage::AuditBias => "audit-bias",
            Stage::Users => "users",
            Stage::Topics => "topics",
            Stage::Changes => "changes",
            Stage::Neighbors => "neighbors",
            Stage::Report => "report",
        }
    }

    pub fn dependencies(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Ingest | Eval => &[],
            Classify => &[Ingest],
            AuditBias => &[Ingest, Classify],
            Users => &[Ingest, Classify],
            Topics => &[Ingest, Users],
            Changes => &[Ingest, Classify, Users, Topics],
            Neighbors => &[Users, Changes],
            Report => &[Ingest, Classify, Users, Topics, Changes, Neighbors],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| PipelineError::Validation(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageOutcome {
    Ran {
        outputs: usize,
    },
    /// Inputs unchanged since the last recorded run.
    Skipped,
}

pub struct Pipeline {
    config: PipelineConfig,
    manifest: Manifest,
}

impl Pipeline {
    /// Validates `config` and opens (or creates) its output directory.
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        std::fs::create_dir_all(&config.out_dir).map_err(|e| PipelineError::io(&config.out_dir, e))?;
        let manifest = Manifest::open(&config.out_dir)?;
        Ok(Self { config, manifest })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        derive_seed(self.config.master_seed, stage.name())
    }

    fn input_fingerprint(&self, stage: Stage) -> Result<BTreeMap<String, String>, PipelineError> {
        let cfg = &self.config;
        let mut parts = BTreeMap::new();
        let json = |v: serde_json::Value| manifest::sha256_hex(v.to_string().as_bytes());
        parts.insert("seed".into(), self.stage_seed(stage).to_string());
        let section = match stage {
            Stage::Ingest => serde_json::json!({"format": cfg.inputs.format, "periods": cfg.periods}),
            Stage::Classify | Stage::Eval => serde_json::to_value(cfg.classifier).map_err(runtime)?,
            Stage::AuditBias => serde_json::to_value(&cfg.audit).map_err(runtime)?,
            Stage::Users => serde_json::json!({"users": cfg.users, "periods": cfg.periods}),
            Stage::Topics => serde_json::to_value(&cfg.topics).map_err(runtime)?,
            Stage::Changes => serde_json::to_value(cfg.changes).map_err(runtime)?,
            Stage::Neighbors => serde_json::to_value(cfg.neighbors).map_err(runtime)?,
            Stage::Report => serde_json::json!({}),
        };
        parts.insert("config".into(), json(section));
        let i = &cfg.inputs;
        let files: Vec<(&str, &Option<PathBuf>)> = match stage {
            Stage::Ingest => vec![("keywords", &i.keywords)],
            Stage::Classify => {
                vec![
                    ("labels", &i.labels),
                    ("warm_start_labels", &i.warm_start_labels),
                    ("external_scores", &i.external_scores),
                ]
            }
            Stage::Eval => vec![("labels", &i.labels), ("warm_start_labels", &i.warm_start_labels)],
            Stage::AuditBias => vec![("reference_tweets", &i.reference_tweets)],
            Stage::Topics => vec![
                ("anti_seeds", &i.anti_seeds),
                ("pro_seeds", &i.pro_seeds),
                ("anti_merge", &i.anti_merge),
                ("pro_merge", &i.pro_merge),
            ],
            Stage::Changes => vec![
                ("bot_scores", &i.bot_scores),
                ("whitelist", &i.whitelist),
                ("metadata", &i.metadata),
                ("vaccines", &i.vaccines),
            ],
            Stage::Neighbors => vec![("following", &i.following)],
            Stage::Users | Stage::Report => vec![],
        };
        if stage == Stage::Ingest {
            parts.insert("file:tweets".into(), hash_file(&i.tweets)?);
        }
        for (name, path) in files {
            let h = match path {
                Some(p) => hash_file(p)?,
                None => "none".into(),
            };
            parts.insert(format!("file:{name}"), h);
        }
        for dep in stage.dependencies() {
            let entry = self.manifest.latest(dep.name()).expect("dependencies checked before fingerprinting");
            parts.insert(format!("dep:{dep}"), entry.output_digest.clone());
        }
        Ok(parts)
    }

    fn check_dependencies(&self, stage: Stage) -> Result<(), PipelineError> {
        let missing: Vec<String> = stage
            .dependencies()
            .iter()
            .filter(|d| !self.manifest.latest(d.name()).is_some_and(|e| outputs_intact(self.out_dir(), e)))
            .map(|d| d.name().to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::MissingDependency { stage: stage.name().into(), missing })
        }
    }

    /// Runs one stage, or skips it when its inputs are unchanged and
    /// `force` is false.
    pub fn run_stage(&mut self, stage: Stage, force: bool) -> Result<StageOutcome, PipelineError> {
        self.check_dependencies(stage)?;
        let inputs = self.input_fingerprint(stage)?;
        let input_hash = combine(&inputs);
        let out_dir = self.config.out_dir.clone();
        if !force {
            if let Some(prev) = self.manifest.latest(stage.name()) {
                if prev.input_hash == input_hash && outputs_intact(&out_dir, prev) {
                    info!("{stage}: inputs unchanged, skipping");
                    return Ok(StageOutcome::Skipped);
                }
            }
        }
        let stage_dir = out_dir.join(stage.name());
        if stage_dir.exists() {
            std::fs::remove_dir_all(&stage_dir).map_err(|e| PipelineError::io(&stage_dir, e))?;
        }
        let started = Instant::now();
        let seed = self.stage_seed(stage);
        info!("{stage}: running with seed {seed}");
        let emit = emit::Emitter::new(stage_dir.clone(), self.config.master_seed)?;
        stages::run(stage, &self.config, &out_dir, seed, &emit)?;
        let mut outputs = BTreeMap::new();
        for rel in list_files(&out_dir, &stage_dir)? {
            let h = hash_file(&out_dir.join(&rel))?;
            outputs.insert(rel, h);
        }
        let n = outputs.len();
        let entry = ManifestEntry {
            stage: stage.name().into(),
            master_seed: self.config.master_seed,
            seed,
            input_hash,
            output_digest: combine(&outputs),
            inputs,
            outputs,
            duration_ms: started.elapsed().as_millis() as u64,
        };
        self.manifest.append(entry)?;
        Ok(StageOutcome::Ran { outputs: n })
    }

    /// Runs every stage in DAG order. `eval` is left out when there are no
    /// training labels.
    pub fn run_all(&mut self, force: bool) -> Result<Vec<(Stage, StageOutcome)>, PipelineError> {
        let mut done = Vec::new();
        for stage in Stage::ALL {
            if stage == Stage::Eval && self.config.inputs.labels.is_none() {
                continue;
            }
            let outcome = self.run_stage(stage, force)?;
            done.push((stage, outcome));
        }
        Ok(done)
    }
}

/// Sha256 over every file below `dir` except the manifest, keyed by
/// relative path. Used to compare whole output trees.
pub fn tree_hash(dir: &Path) -> Result<String, PipelineError> {
    let mut parts = BTreeMap::new();
    for rel in list_files(dir, dir)? {
        if rel != manifest::MANIFEST_FILE {
            let h = hash_file(&dir.join(&rel))?;
            parts.insert(rel, h);
        }
    }
    Ok(combine(&parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
            for d in s.dependencies() {
                let pos = |x: &Stage| Stage::ALL.iter().position(|y| y == x).unwrap();
                assert!(pos(d) < pos(&s), "{d} must come before {s}");
            }
        }
        assert_eq!("nope".parse::<Stage>().unwrap_err().exit_code(), 1);
    }

    #[test]
    fn exit_codes() {
        let dep = PipelineError::MissingDependency { stage: "users".into(), missing: vec!["classify".into()] };
        assert_eq!(dep.exit_code(), 3);
        assert!(dep.to_string().contains("run classify first"));
        assert_eq!(PipelineError::Runtime("x".into()).exit_code(), 2);
    }
}
