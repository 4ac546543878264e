//! Output file writers shared by the stages.
//!
//! CSV files start with a `# master_seed=<n>` comment line; JSON files wrap
//! their payload as `{"master_seed": n, "data": ...}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PipelineError;

pub struct Emitter {
    dir: PathBuf,
    master_seed: u64,
}

#[derive(Serialize)]
struct Wrapped<'a, T> {
    master_seed: u64,
    data: &'a T,
}

#[derive(Deserialize)]
struct Unwrapped<T> {
    data: T,
}

impl Emitter {
    pub fn new(dir: PathBuf, master_seed: u64) -> Result<Self, PipelineError> {
        fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        Ok(Self { dir, master_seed })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write(&self, name: &str, bytes: Vec<u8>) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))
    }

    pub fn csv<F>(&self, name: &str, body: F) -> Result<(), PipelineError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>,
    {
        let mut buf = format!("# master_seed={}\n", self.master_seed).into_bytes();
        body(&mut buf).map_err(|e| PipelineError::Runtime(format!("writing {name}: {e}")))?;
        self.write(name, buf)
    }

    pub fn json<T: Serialize>(&self, name: &str, data: &T) -> Result<(), PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(&Wrapped { master_seed: self.master_seed, data })
            .map_err(|e| PipelineError::Runtime(format!("serializing {name}: {e}")))?;
        bytes.push(b'\n');
        self.write(name, bytes)
    }
}

/// Reads the payload of a file written by [`Emitter::json`].
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    let w: Unwrapped<T> =
        serde_json::from_slice(&bytes).map_err(|e| PipelineError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(w.data)
}

pub fn f6(v: f64) -> String {
    format!("{v:.6}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = Emitter::new(dir.path().join("stage"), 42).unwrap();
        e.csv("t.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["a", "b"])?;
            w.flush()?;
            Ok(())
        })
        .unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("stage/t.csv")).unwrap(), "# master_seed=42\na,b\n");
        e.json("sub/v.json", &vec![0.1f64, 1.0 / 3.0]).unwrap();
        let back: Vec<f64> = read_json(&dir.path().join("stage/sub/v.json")).unwrap();
        assert_eq!(back, vec![0.1, 1.0 / 3.0]);
        assert!(fs::read_to_string(dir.path().join("stage/sub/v.json")).unwrap().contains("\"master_seed\": 42"));
    }
}
