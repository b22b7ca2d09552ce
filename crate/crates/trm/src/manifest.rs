//! Run manifests: everything needed to repeat a training run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trm_core::fit::TrainConfig;
use trm_core::hostnet::HostNetConfig;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl From<&TrainConfig> for TrainSettings {
    fn from(c: &TrainConfig) -> Self {
        Self {
            epochs: c.epochs,
            batch_size: c.batch_size,
            weight_decay: c.weight_decay,
            learning_rate: c.learning_rate,
            seed: c.seed,
            adam_beta1: c.adam_beta1,
            adam_beta2: c.adam_beta2,
            adam_epsilon: c.adam_epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostSettings {
    pub n_temporal_filters: usize,
    pub temporal_kernel_len: usize,
    pub pool_len: usize,
    pub pool_stride: usize,
    pub dropout_p: f64,
    pub n_classes: usize,
}

impl From<&HostNetConfig> for HostSettings {
    fn from(c: &HostNetConfig) -> Self {
        Self {
            n_temporal_filters: c.n_temporal_filters,
            temporal_kernel_len: c.temporal_kernel_len,
            pool_len: c.pool_len,
            pool_stride: c.pool_stride,
            dropout_p: c.dropout_p,
            n_classes: c.n_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Arguments after the program name, as given.
    pub arguments: Vec<String>,
    /// `fast` (32-bit) or `check` (64-bit).
    pub precision: String,
    pub data: PathBuf,
    pub test_data: Option<PathBuf>,
    pub montage: Option<PathBuf>,
    pub baseline_ms: Option<f64>,
    pub trm_k: Option<usize>,
    pub protocol: String,
    /// Rotation `r` initialises and shuffles with `train.seed + r`.
    pub train: TrainSettings,
    pub host: HostSettings,
    pub artifacts: Vec<PathBuf>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifests always serialize");
        text.push('\n');
        fs::write(path, text).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}
