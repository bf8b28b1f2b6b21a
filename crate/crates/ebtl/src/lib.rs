//! Experiment harness for energy-gated teacher-student transfer: TOML
//! configuration, checkpoints, CSV records, training and transfer loops,
//! analysis and SVG plots. The numerical core lives in `ebtl_core`.

#![deny(rust_2018_idioms)]

use std::path::{Path, PathBuf};

pub mod analysis;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod envspec;
pub mod harness;
pub mod layout;
pub mod plot;
pub mod records;
pub mod rollout;

pub use checkpoint::Checkpoint;
pub use config::ExperimentConfig;
pub use envspec::EnvSpec;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] ebtl_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {msg}")]
    Csv { path: PathBuf, msg: String },
    #[error("checkpoint: not a checkpoint file")]
    BadMagic,
    #[error("checkpoint: unsupported version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("checkpoint: checksum mismatch, file is corrupt")]
    Corrupt,
    #[error("checkpoint: truncated or malformed ({0})")]
    Malformed(String),
    #[error("checkpoint: tensor `{name}` has shape {found:?}, expected {expected:?}")]
    TensorShape { name: String, found: Vec<usize>, expected: Vec<usize> },
    #[error("curves are not sampled at the same steps")]
    CurveMismatch,
    #[error("relative transfer performance: baseline area is zero")]
    ZeroBaseline,
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::Io { path: path.to_path_buf(), source }
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
