//! Run manifests: enough provenance (config hash, seeds, artifact versions)
//! to reproduce any artifact bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
pub struct SplitEntry {
    pub file: String,
    pub records: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct GenManifest {
    pub tool_version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    /// Global normalization scalar derived from the training split.
    pub scale: f64,
    pub splits: BTreeMap<String, SplitEntry>,
}

#[derive(Debug, Serialize)]
pub struct TrainManifest {
    pub tool_version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub model_init_seed: u64,
    pub schedule_seed: u64,
    pub train_data: String,
    pub val_data: String,
    pub checkpoint: String,
    pub epochs_run: usize,
    pub best_val_elbo: f64,
}

#[derive(Debug, Serialize)]
pub struct ReportManifest {
    pub tool_version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub data: Vec<String>,
    pub checkpoints: Vec<String>,
    pub report: String,
}

pub fn write_manifest<T: Serialize>(path: &Path, manifest: &T) -> Result<()> {
    let text = toml::to_string_pretty(manifest).context("serializing manifest")?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
