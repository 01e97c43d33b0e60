//! On-disk layout of a training run:
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/interface_000.jsonl
//! <dir>/interface_001.jsonl
//! ...
//! ```
//!
//! The manifest holds everything in [`RunHistory`] except the episodes,
//! which live in one log file per interface.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::train::{IterationRecord, RunHistory};
use crate::error::{Error, Result};
use crate::offline::{load_episodes, save_episodes, Outcome};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub record: IterationRecord,
    pub mean_reward: f64,
    pub successes: usize,
    pub log_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub env: crate::envs::EnvKind,
    pub seed: u64,
    pub delta: usize,
    pub random_phase: usize,
    pub episodes_per_interface: usize,
    pub budget: usize,
    pub best_index: Option<usize>,
    pub interfaces: Vec<ManifestEntry>,
    /// Why the run stopped before its budget, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

pub fn interface_log_name(index: usize) -> String {
    format!("interface_{index:03}.jsonl")
}

impl RunManifest {
    pub fn from_history(history: &RunHistory) -> Self {
        Self {
            env: history.env,
            seed: history.seed,
            delta: history.delta,
            random_phase: history.random_phase,
            episodes_per_interface: history.episodes_per_interface,
            budget: history.budget,
            best_index: history.best().map(|r| r.index),
            interfaces: history
                .iterations
                .iter()
                .map(|r| ManifestEntry {
                    record: r.clone(),
                    mean_reward: r.mean_reward(),
                    successes: r
                        .episodes
                        .iter()
                        .filter(|e| e.meta.outcome == Some(Outcome::Success))
                        .count(),
                    log_file: interface_log_name(r.index),
                })
                .collect(),
            aborted: None,
        }
    }
}

/// Writes the manifest and every interface's episode log.
pub fn save_run(dir: &Path, history: &RunHistory) -> Result<PathBuf> {
    save_run_noted(dir, history, None)
}

/// As [`save_run`], recording an abort reason in the manifest.
pub fn save_run_noted(dir: &Path, history: &RunHistory, aborted: Option<&str>) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = history.env.log_header();
    for r in &history.iterations {
        save_episodes(&dir.join(interface_log_name(r.index)), &header, &r.episodes)?;
    }
    let mut manifest = RunManifest::from_history(history);
    manifest.aborted = aborted.map(str::to_string);
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads a run back, episodes included.
pub fn load_run(dir: &Path) -> Result<RunHistory> {
    let manifest = load_manifest(dir)?;
    let iterations = manifest
        .interfaces
        .into_iter()
        .map(|entry| {
            let mut record = entry.record;
            record.episodes = load_episodes(&dir.join(&entry.log_file))?;
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunHistory {
        env: manifest.env,
        seed: manifest.seed,
        delta: manifest.delta,
        random_phase: manifest.random_phase,
        episodes_per_interface: manifest.episodes_per_interface,
        budget: manifest.budget,
        iterations,
    })
}
