//! Run manifest: every artifact with its content hash, so a run can be
//! verified bit-for-bit. Timing files are volatile by nature and are
//! written outside the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub seed: u64,
    pub artifacts: Vec<ManifestEntry>,
}

/// Writes artifacts under one output directory and accumulates manifest
/// entries for the hashed ones.
pub struct RunWriter {
    out_dir: PathBuf,
    seed: u64,
    entries: Vec<ManifestEntry>,
}

impl RunWriter {
    pub fn create(out_dir: &Path, seed: u64) -> Result<Self> {
        fs::create_dir_all(out_dir)
            .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
        Ok(RunWriter {
            out_dir: out_dir.to_path_buf(),
            seed,
            entries: Vec::new(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Writes a deterministic artifact and records its hash.
    pub fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.out_dir.join(name);
        fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
        let digest = Sha256::digest(content.as_bytes());
        self.entries.push(ManifestEntry {
            path: name.to_string(),
            sha256: format!("{digest:x}"),
            bytes: content.len(),
        });
        Ok(())
    }

    /// Writes a volatile artifact (timings and the like) that stays out
    /// of the manifest.
    pub fn write_volatile(&self, name: &str, content: &str) -> Result<()> {
        let path = self.out_dir.join(name);
        fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    /// Writes `manifest.json` listing everything recorded so far.
    pub fn finish(mut self) -> Result<Manifest> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            tool: "tradecast".to_string(),
            seed: self.seed,
            artifacts: self.entries,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.out_dir.join("manifest.json"), text)?;
        Ok(manifest)
    }
}
