//! Output directory with a content-hashed manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedEntry {
    pub replicate: u64,
    pub role: String,
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub preset: String,
    pub version: &'static str,
    pub master_seed: u64,
    pub config: &'a ExperimentConfig,
    pub seeds: &'a [SeedEntry],
    pub files: &'a [FileEntry],
    pub notes: &'a BTreeMap<String, String>,
    pub wall_seconds: &'a BTreeMap<String, f64>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Collects outputs under one root. Files are written immediately; the
/// manifest is written by [`Bundle::finish`].
#[derive(Debug)]
pub struct Bundle {
    root: PathBuf,
    files: Vec<FileEntry>,
    seeds: Vec<SeedEntry>,
    notes: BTreeMap<String, String>,
    wall: BTreeMap<String, f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Bundle {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|source| CliError::Output {
            path: root.display().to_string(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            seeds: Vec::new(),
            notes: BTreeMap::new(),
            wall: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` to `name` (relative, `/`-separated) and records it.
    pub fn write(&mut self, name: &str, role: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
                path: dir.display().to_string(),
                source,
            })?;
        }
        std::fs::write(&path, bytes).map_err(|source| CliError::Output {
            path: path.display().to_string(),
            source,
        })?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
            role: role.to_string(),
        });
        Ok(())
    }

    /// Runs a CSV writer into memory and stores the result.
    pub fn write_csv<F>(&mut self, name: &str, role: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> permdiag::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|source| CliError::Library {
            context: format!("writing {name}"),
            source,
        })?;
        self.write(name, role, &buf)
    }

    pub fn record_seed(&mut self, replicate: u64, role: &str, s: permdiag::SeededStream) {
        self.seeds.push(SeedEntry {
            replicate,
            role: role.to_string(),
            seed: s.seed,
            stream: s.stream,
        });
    }

    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.notes.insert(key.to_string(), value.into());
    }

    pub fn time(&mut self, stage: &str, d: Duration) {
        self.wall.insert(stage.to_string(), d.as_secs_f64());
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    /// Writes the manifest and returns the list of recorded files.
    pub fn finish(self, cfg: &ExperimentConfig) -> Result<Vec<FileEntry>, CliError> {
        let manifest = Manifest {
            preset: cfg.preset.id().to_string(),
            version: env!("CARGO_PKG_VERSION"),
            master_seed: cfg.seed,
            config: cfg,
            seeds: &self.seeds,
            files: &self.files,
            notes: &self.notes,
            wall_seconds: &self.wall,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
        let path = self.root.join(MANIFEST_NAME);
        std::fs::write(&path, text).map_err(|source| CliError::Output {
            path: path.display().to_string(),
            source,
        })?;
        Ok(self.files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    #[test]
    fn manifest_lists_every_file_with_hash() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = Bundle::create(dir.path()).unwrap();
        b.write("a/one.csv", "data", b"x\n1\n").unwrap();
        b.write("two.svg", "figure", b"<svg/>").unwrap();
        b.write("two.svg", "figure", b"<svg></svg>").unwrap();
        let files = b.finish(&ExperimentConfig::new(Preset::TheoremCheck)).unwrap();
        assert_eq!(files.len(), 2);
        let text = std::fs::read_to_string(dir.path().join(MANIFEST_NAME)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let listed = v["files"].as_array().unwrap();
        for entry in listed {
            let name = entry["name"].as_str().unwrap();
            let bytes = std::fs::read(dir.path().join(name)).unwrap();
            assert_eq!(entry["sha256"].as_str().unwrap(), sha256_hex(&bytes));
        }
        assert_eq!(v["preset"], "theorem_check");
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
