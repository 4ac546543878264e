//! Append-only record of stage runs.
//!
//! Each line of `manifest.jsonl` describes one executed stage: the hash of
//! everything it read, the hash of every file it wrote, and the output
//! digests of the stages it depended on. Stage input hashes fold in those
//! digests, so the entries form a hash chain back to the raw inputs.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage: String,
    pub master_seed: u64,
    pub seed: u64,
    pub input_hash: String,
    /// Named inputs that went into `input_hash`, including upstream digests.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the run directory → sha256.
    pub outputs: BTreeMap<String, String>,
    pub output_digest: String,
    pub duration_ms: u64,
}

/// Hash over a sorted `(name, value)` list.
pub fn combine(parts: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in parts {
        h.update(k.as_bytes());
        h.update([0]);
        h.update(v.as_bytes());
        h.update([0]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    path: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn open(out_dir: &Path) -> Result<Self, PipelineError> {
        let path = out_dir.join(MANIFEST_FILE);
        let mut entries = Vec::new();
        if path.exists() {
            let f = fs::File::open(&path).map_err(|e| PipelineError::io(&path, e))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| PipelineError::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry = serde_json::from_str(&line)
                    .map_err(|e| PipelineError::Runtime(format!("{}: line {}: {e}", path.display(), i + 1)))?;
                entries.push(entry);
            }
        }
        Ok(Self { path, entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Most recent run of `stage`.
    pub fn latest(&self, stage: &str) -> Option<&ManifestEntry> {
        self.entries.iter().rev().find(|e| e.stage == stage)
    }

    pub fn append(&mut self, entry: ManifestEntry) -> Result<(), PipelineError> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| PipelineError::io(&self.path, e))?;
        let line = serde_json::to_string(&entry).expect("manifest entries serialize");
        writeln!(f, "{line}").map_err(|e| PipelineError::io(&self.path, e))?;
        self.entries.push(entry);
        Ok(())
    }
}

/// Whether every recorded output still exists with its recorded hash.
pub fn outputs_intact(out_dir: &Path, entry: &ManifestEntry) -> bool {
    entry.outputs.iter().all(|(rel, hash)| hash_file(&out_dir.join(rel)).is_ok_and(|h| h == *hash))
}

/// Files under `dir`, relative to `root`, sorted, using `/` separators.
pub fn list_files(root: &Path, dir: &Path) -> Result<Vec<String>, PipelineError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| PipelineError::io(&d, e))? {
            let p = entry.map_err(|e| PipelineError::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).expect("walked below root");
                out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::open(dir.path()).unwrap();
        assert!(m.latest("x").is_none());
        let entry = |hash: &str| ManifestEntry {
            stage: "x".into(),
            master_seed: 1,
            seed: 2,
            input_hash: hash.into(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            output_digest: combine(&BTreeMap::new()),
            duration_ms: 0,
        };
        m.append(entry("a")).unwrap();
        m.append(entry("b")).unwrap();
        let again = Manifest::open(dir.path()).unwrap();
        assert_eq!(again.entries().len(), 2);
        assert_eq!(again.latest("x").unwrap().input_hash, "b");
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let a = combine(&BTreeMap::from([("k".to_string(), "v".to_string())]));
        let b = combine(&BTreeMap::from([("k".to_string(), "w".to_string())]));
        assert_ne!(a, b);
    }

    #[test]
    fn file_listing_is_sorted_and_relative() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("s/sub")).unwrap();
        fs::write(dir.path().join("s/b.csv"), "1").unwrap();
        fs::write(dir.path().join("s/sub/a.csv"), "2").unwrap();
        fs::write(dir.path().join("s/a.csv"), "3").unwrap();
        let files = list_files(dir.path(), &dir.path().join("s")).unwrap();
        assert_eq!(files, vec!["s/a.csv", "s/b.csv", "s/sub/a.csv"]);
    }
}
