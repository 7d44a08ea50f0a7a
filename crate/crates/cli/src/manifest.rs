use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance of one command invocation, embedded in everything it writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub tool_version: String,
    pub inputs: Vec<InputHash>,
    pub wall_time_ns: u64,
}

pub struct ManifestBuilder {
    command: &'static str,
    argv: Vec<String>,
    config: serde_json::Value,
    inputs: Vec<InputHash>,
    start: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &'static str, argv: &[String], config: &impl Serialize) -> Self {
        Self {
            command,
            argv: argv.to_vec(),
            config: serde_json::to_value(config).expect("config serializes"),
            inputs: Vec::new(),
            start: Instant::now(),
        }
    }

    /// Hashes `path`; directories contribute every regular file inside them,
    /// in name order.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(path)
                .with_context(|| format!("listing {}", path.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            for f in files {
                self.input(&f)?;
            }
            return Ok(());
        }
        let bytes = fs::read(path).map_err(|e| headrouter::Error::io(path, e))?;
        self.inputs.push(InputHash {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn finish(&self) -> RunManifest {
        RunManifest {
            command: self.command.to_string(),
            argv: self.argv.clone(),
            config: self.config.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: self.inputs.clone(),
            wall_time_ns: u64::try_from(self.start.elapsed().as_nanos()).unwrap_or(u64::MAX),
        }
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| headrouter::Error::io(path, e))?;
    Ok(())
}
