//! Per-stage provenance records.
//!
//! Every stage directory gets a `manifest.json` listing the config it ran
//! with and sha256 hashes of what it read and wrote. Paths inside the output
//! directory are stored relative to it. Wall time lives in `timings.json`
//! at the output root so that manifests stay byte-identical across reruns.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> CliError {
    if e.kind() == std::io::ErrorKind::NotFound {
        CliError::Missing(format!("{}: {e}", path.display()))
    } else {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

/// `path` relative to `root` with forward slashes; paths outside `root`
/// are kept as given.
pub fn display_path(root: &Path, path: &Path) -> String {
    match path.strip_prefix(root) {
        Ok(rel) => rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/"),
        Err(_) => path.display().to_string(),
    }
}

/// Every regular file below `dir` except its manifest, in path order.
pub fn files_below(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| io_err(&d, e))? {
            let entry = entry.map_err(|e| io_err(&d, e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if !(d == dir && entry.file_name() == MANIFEST) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn hash_files(root: &Path, paths: &[PathBuf]) -> CliResult<BTreeMap<String, String>> {
    paths
        .iter()
        .map(|p| Ok((display_path(root, p), sha256_file(p)?)))
        .collect()
}

impl Manifest {
    pub fn write(&self, stage_dir: &Path) -> CliResult<()> {
        let path = stage_dir.join(MANIFEST);
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(&path, json).map_err(|e| io_err(&path, e))
    }

    pub fn read(stage_dir: &Path) -> CliResult<Self> {
        let path = stage_dir.join(MANIFEST);
        let raw = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&raw).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    /// Rehashes the recorded outputs; the first mismatch is an error.
    pub fn verify_outputs(&self, root: &Path) -> CliResult<()> {
        for (rel, want) in &self.outputs {
            let path = root.join(rel);
            let got = sha256_file(&path)?;
            if &got != want {
                return Err(CliError::HashMismatch(format!(
                    "{rel} changed since {} wrote it; rerun {}",
                    self.stage, self.stage
                )));
            }
        }
        Ok(())
    }
}

/// Records a stage's wall time in `root/timings.json`.
pub fn record_timing(root: &Path, stage: &str, secs: f64) -> CliResult<()> {
    let path = root.join(TIMINGS);
    let mut timings: BTreeMap<String, f64> = match fs::read_to_string(&path) {
        Ok(raw) => serde_json::from_str(&raw).unwrap_or_default(),
        Err(_) => BTreeMap::new(),
    };
    timings.insert(stage.to_string(), secs);
    let json = serde_json::to_string_pretty(&timings)?;
    fs::write(&path, json).map_err(|e| io_err(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let stage = dir.path().join("s");
        fs::create_dir_all(stage.join("sub")).unwrap();
        fs::write(stage.join("sub/a.txt"), "a").unwrap();
        fs::write(stage.join("b.txt"), "b").unwrap();
        let files = files_below(&stage).unwrap();
        let m = Manifest {
            stage: "s".into(),
            seed: 1,
            config: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            outputs: hash_files(dir.path(), &files).unwrap(),
        };
        assert_eq!(m.outputs.keys().collect::<Vec<_>>(), ["s/b.txt", "s/sub/a.txt"]);
        m.write(&stage).unwrap();
        assert_eq!(files_below(&stage).unwrap().len(), 2);
        assert_eq!(Manifest::read(&stage).unwrap(), m);
        m.verify_outputs(dir.path()).unwrap();
        fs::write(stage.join("b.txt"), "changed").unwrap();
        assert!(matches!(m.verify_outputs(dir.path()), Err(CliError::HashMismatch(_))));
    }

    #[test]
    fn empty_file_hash() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e");
        fs::write(&p, "").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
