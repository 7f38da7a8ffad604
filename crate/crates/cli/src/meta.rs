use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Provenance record written next to the outputs of each stage.
#[derive(Debug, Serialize)]
pub struct StageMeta<'a> {
    pub stage: &'a str,
    pub version: &'a str,
    pub config: &'a PipelineConfig,
    /// Input path as given on the command line -> SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name -> SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl<'a> StageMeta<'a> {
    pub fn new(stage: &'a str, config: &'a PipelineConfig) -> Self {
        Self {
            stage,
            version: env!("CARGO_PKG_VERSION"),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Records an output relative to `base`.
    pub fn output(&mut self, base: &Path, path: &Path) -> anyhow::Result<()> {
        let name = path.strip_prefix(base).unwrap_or(path);
        self.outputs
            .insert(name.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}
