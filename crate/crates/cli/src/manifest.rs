//! Run manifests: what went in, what came out, and with which settings.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: u64,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// Effective configuration of the command.
    pub config: toml::Table,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Collects manifest entries while a command runs.
pub struct Run {
    out_dir: PathBuf,
    manifest: RunManifest,
    input_paths: Vec<PathBuf>,
    output_paths: Vec<PathBuf>,
}

impl Run {
    pub fn start(command: &str, out_dir: &Path, seed: Option<u64>) -> Self {
        Run {
            out_dir: out_dir.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                started_at: now(),
                finished_at: 0,
                inputs: Vec::new(),
                outputs: Vec::new(),
                config: toml::Table::new(),
            },
            input_paths: Vec::new(),
            output_paths: Vec::new(),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        self.manifest.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.manifest.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        self.input_paths.push(path.canonicalize().unwrap_or_else(|_| path.to_path_buf()));
        Ok(())
    }

    /// Records a configuration section under `key`.
    pub fn config<T: Serialize>(&mut self, key: &str, value: &T) -> anyhow::Result<()> {
        let v = toml::Value::try_from(value).with_context(|| format!("serialising {key} config"))?;
        self.manifest.config.insert(key.to_string(), v);
        Ok(())
    }

    /// Path for an output file; refuses to overwrite any input.
    pub fn output(&mut self, name: &str) -> anyhow::Result<PathBuf> {
        let path = self.out_dir.join(name);
        if let Ok(c) = path.canonicalize() {
            if self.input_paths.contains(&c) {
                bail!("output {} would overwrite an input", path.display());
            }
        }
        self.output_paths.push(path.clone());
        Ok(path)
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        for p in &self.output_paths {
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            self.manifest.outputs.push(FileHash {
                path: name,
                sha256: sha256_file(p)?,
            });
        }
        self.manifest.finished_at = now();
        let path = self.out_dir.join(MANIFEST_FILE);
        let text = toml::to_string(&self.manifest)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
