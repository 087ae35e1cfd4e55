use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crossmodal_core::archive::sha256_file;
use crossmodal_core::{Error, ExperimentConfig, Result};
use serde::Serialize;

pub const MANIFEST: &str = "manifest.json";

/// Replay record of one command invocation.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    pub started: String,
    pub seed: u64,
    pub config_digest: String,
    /// Path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// File name within the run directory to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

/// A fresh run directory collecting outputs and their hashes.
pub struct Run {
    pub dir: PathBuf,
    manifest: Manifest,
    outputs: Vec<String>,
}

impl Run {
    /// Creates `<root>/<stamp>-<command>-seed<seed>` and records the effective config.
    pub fn start(root: &Path, command: &str, cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let now = chrono::Utc::now();
        let base = format!("{}-{command}-seed{seed}", now.format("%Y%m%dT%H%M%S%.3fZ"));
        std::fs::create_dir_all(root)?;
        let mut dir = root.join(&base);
        let mut n = 1;
        while dir.exists() {
            dir = root.join(format!("{base}-{n}"));
            n += 1;
        }
        std::fs::create_dir(&dir)?;
        let mut run = Self {
            dir,
            manifest: Manifest {
                command: command.into(),
                argv: std::env::args().collect(),
                version: env!("CARGO_PKG_VERSION").into(),
                started: now.to_rfc3339(),
                seed,
                config_digest: cfg.digest(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
            outputs: Vec::new(),
        };
        std::fs::write(run.output("config.toml"), cfg.to_toml()?)?;
        Ok(run)
    }

    /// Registers an input file, failing if it does not exist.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        if !path.is_file() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        self.manifest.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Path of a named output inside the run directory.
    pub fn output(&mut self, name: &str) -> PathBuf {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.into());
        }
        self.dir.join(name)
    }

    /// Hashes every output and writes the manifest.
    pub fn finish(mut self) -> Result<PathBuf> {
        for name in &self.outputs {
            let path = self.dir.join(name);
            if path.is_file() {
                self.manifest.outputs.insert(name.clone(), sha256_file(&path)?);
            }
        }
        std::fs::write(self.dir.join(MANIFEST), serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(self.dir)
    }
}
