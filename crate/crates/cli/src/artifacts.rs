//! Output directory bookkeeping: every file a command writes goes through
//! [`Artifacts`] so that the run manifest lists it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// SHA-256 of `config.<command>.toml`; absent for `report`.
    pub config_sha256: Option<String>,
    pub command: String,
    pub wall_time_seconds: f64,
    /// Paths relative to the output directory, sorted.
    pub artifacts: Vec<String>,
}

pub fn manifest_name(command: &str) -> String {
    format!("manifest.{command}.json")
}

/// The effective config of one command, after overrides.
pub fn config_name(command: &str) -> String {
    format!("config.{command}.toml")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Files are held in memory and written by [`Artifacts::finish`], so a run
/// that fails midway leaves the directory untouched.
pub struct Artifacts {
    root: PathBuf,
    command: String,
    pending: BTreeMap<String, Vec<u8>>,
    config_sha256: Option<String>,
    started: Instant,
}

impl Artifacts {
    pub fn open(root: &Path, command: &str) -> Self {
        Artifacts {
            root: root.to_path_buf(),
            command: command.to_string(),
            pending: BTreeMap::new(),
            config_sha256: None,
            started: Instant::now(),
        }
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        self.pending.insert(rel.to_string(), bytes.to_vec());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn write_config(&mut self, toml_text: &str) -> Result<()> {
        self.config_sha256 = Some(sha256_hex(toml_text.as_bytes()));
        let name = config_name(&self.command);
        self.write(&name, toml_text.as_bytes())
    }

    /// Removes the files of an earlier run of the same command, writes the
    /// pending files and the manifest.
    pub fn finish(self) -> Result<RunManifest> {
        let root = &self.root;
        std::fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        let path = root.join(manifest_name(&self.command));
        if path.exists() {
            let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
            if let Ok(old) = serde_json::from_str::<RunManifest>(&text) {
                for a in old.artifacts.iter().filter(|a| !self.pending.contains_key(*a)) {
                    let p = root.join(a);
                    if p.is_file() {
                        std::fs::remove_file(&p).with_context(|| format!("cannot remove stale {}", p.display()))?;
                    }
                }
            }
        }
        for (rel, bytes) in &self.pending {
            let p = root.join(rel);
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            }
            std::fs::write(&p, bytes).with_context(|| format!("cannot write {}", p.display()))?;
        }
        let m = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: self.config_sha256,
            command: self.command,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            artifacts: self.pending.into_keys().collect(),
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(m)
    }
}
