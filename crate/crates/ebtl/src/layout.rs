//! File layout of a run directory.

use std::path::{Path, PathBuf};

use ebtl_core::transfer::Strategy;

use crate::{Error, Result};

pub const METRICS: &str = "metrics.csv";
pub const EVENTS: &str = "events.csv";
pub const PROGRESS: &str = "progress.csv";
pub const SCORES: &str = "scores.csv";
pub const HEATMAP: &str = "heatmap.csv";
pub const DIVERGENCE: &str = "divergence.csv";
pub const TEACHER: &str = "teacher.ckpt";
pub const BEST: &str = "best.ckpt";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn teacher(&self, seed: u64) -> PathBuf {
        self.root.join("teacher").join(seed_dir(seed))
    }

    pub fn ood(&self, seed: u64) -> PathBuf {
        self.root.join("ood").join(format!("seed-{seed}.csv"))
    }

    pub fn transfers(&self) -> PathBuf {
        self.root.join("transfer")
    }

    pub fn transfer(&self, label: &str, seed: u64) -> PathBuf {
        self.transfers().join(label).join(seed_dir(seed))
    }

    pub fn evaluations(&self) -> PathBuf {
        self.root.join("evaluate")
    }

    pub fn evaluate(&self, seed: u64) -> PathBuf {
        self.evaluations().join(seed_dir(seed))
    }

    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }
}

pub fn seed_dir(seed: u64) -> String {
    format!("seed-{seed}")
}

/// Directory label of a transfer run; quantile-gated strategies carry
/// their quantile.
pub fn transfer_label(strategy: Strategy, quantile: f64) -> String {
    match strategy {
        Strategy::Ebtl => format!("{}-q{quantile:.1}", strategy.as_str()),
        s => s.as_str().to_string(),
    }
}

/// Subdirectories of `dir`, sorted by name. A missing directory has none.
pub fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Seed of a `seed-N` directory.
pub fn seed_of(dir: &Path) -> Option<u64> {
    dir.file_name()?.to_str()?.strip_prefix("seed-")?.parse().ok()
}
