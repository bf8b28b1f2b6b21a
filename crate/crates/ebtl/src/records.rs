//! CSV record types and their readers and writers.

use std::path::Path;

use ebtl_core::transfer::GuidanceEvent;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One evaluation point of a transfer run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub global_step: u64,
    pub mean_eval_return: f64,
    pub guidance_issue_rate: f64,
    pub correct_guidance_rate: f64,
    pub incorrect_guidance_rate: f64,
    /// Mean teacher energy over in-distribution states since the previous row.
    pub mean_phi_id: f64,
    pub mean_phi_ood: f64,
}

/// One guidance decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub global_step: u64,
    pub episode_step: usize,
    pub phi: f64,
    pub tau: f64,
    pub issued: bool,
    pub ground_truth_id: bool,
    pub strategy: String,
}

impl EventRow {
    pub fn new(e: &GuidanceEvent, strategy: &str) -> Self {
        Self {
            global_step: e.global_step,
            episode_step: e.episode_step,
            phi: e.phi,
            tau: e.tau,
            issued: e.issued,
            ground_truth_id: e.ground_truth_id,
            strategy: strategy.to_string(),
        }
    }

    pub fn event(&self) -> GuidanceEvent {
        GuidanceEvent {
            global_step: self.global_step,
            episode_step: self.episode_step,
            phi: self.phi,
            tau: self.tau,
            issued: self.issued,
            ground_truth_id: self.ground_truth_id,
        }
    }
}

/// Teacher energy of one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub phi: f64,
    /// `teacher_train`, `target_rollout` or `ood_train_set`.
    pub origin: String,
    pub ground_truth_id: Option<bool>,
}

/// One evaluation point of teacher training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgressRow {
    pub seed: u64,
    pub global_step: u64,
    pub mean_eval_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub energy_loss: f64,
    pub mean_phi_id: f64,
    pub mean_phi_ood: f64,
}

/// Mean energy per cell of the grid; absent cells are left empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub x: usize,
    pub y: usize,
    pub mean_quantile: Option<f64>,
    pub count: usize,
}

/// Divergence between the energy distributions of two state sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub seed: u64,
    /// `js`, `tv`, `hellinger` or `kl`.
    pub metric: String,
    pub value: f64,
}

/// A state of the out-of-distribution set, by discrete key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodRow {
    pub index: usize,
    pub state_key: String,
    pub ground_truth_id: bool,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let csv_err = |e: csv::Error| Error::Csv { path: path.to_path_buf(), msg: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let csv_err = |e: csv::Error| Error::Csv { path: path.to_path_buf(), msg: e.to_string() };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}
