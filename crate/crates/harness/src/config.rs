//! Experiment configuration, the arm contract, and the data split.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trajkit_core::synth::SynthConfig;
use trajkit_core::trajset::MatchMetric;
use trajkit_models::{HeadKind, ModelConfig, PretrainTask, TrainConfig};

use crate::error::{Error, Result};

/// Metric names accepted in `metrics`; also the report columns after `arm,seed`.
pub const METRIC_NAMES: [&str; 5] = ["minade1", "minade5", "minade10", "fde", "hitrate_5_2m"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSpec {
    Path { path: PathBuf },
    Synthetic { synthetic: SynthConfig, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrajsetSpec {
    Path {
        path: PathBuf,
    },
    /// Greedy cover of the training-split ground truths.
    Build {
        epsilon: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSpec {
    pub task: PretrainTask,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for PretrainSpec {
    fn default() -> Self {
        Self {
            task: PretrainTask::Rotation4,
            epochs: 5,
            lr: 1e-3,
            batch_size: 16,
        }
    }
}

/// Hyperparameters shared by every arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    /// Freeze encoder blocks 0–2 during fine-tuning.
    pub freeze_lower: bool,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub model: ModelConfig,
    pub metric: MatchMetric,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            freeze_lower: true,
            epochs: 20,
            lr: 3e-3,
            batch_size: 16,
            model: ModelConfig::default(),
            metric: MatchMetric::default(),
        }
    }
}

/// One ablation arm: a head and an encoder initialization. `freeze`, `lr`,
/// `epochs` and `batch_size` may be restated but must match the shared
/// training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub id: String,
    pub head: HeadKind,
    #[serde(default)]
    pub pretrained: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub trajset: TrajsetSpec,
    #[serde(default)]
    pub pretrain: PretrainSpec,
    #[serde(default)]
    pub training: TrainingSpec,
    pub arms: Vec<ArmSpec>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    pub output_dir: PathBuf,
}

fn default_metrics() -> Vec<String> {
    METRIC_NAMES.iter().map(|s| s.to_string()).collect()
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check the "all other factors equal" contract and basic sanity.
    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() {
            return Err(Error::Config("no arms".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for arm in &self.arms {
            if arm.id.is_empty()
                || !arm
                    .id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "-_+".contains(c))
            {
                return Err(Error::Config(format!(
                    "arm id {:?} must be nonempty [A-Za-z0-9_+-]",
                    arm.id
                )));
            }
            if !seen.insert(&arm.id) {
                return Err(Error::Config(format!("duplicate arm id {:?}", arm.id)));
            }
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("duplicate seeds".into()));
        }
        for m in &self.metrics {
            if !METRIC_NAMES.contains(&m.as_str()) {
                return Err(Error::Config(format!(
                    "unknown metric {m:?}; known: {}",
                    METRIC_NAMES.join(", ")
                )));
            }
        }
        for arm in &self.arms {
            let t = &self.training;
            if let Some(f) = arm.freeze.filter(|&f| f != t.freeze_lower) {
                return Err(Error::ArmContract(format!(
                    "arm {:?} sets freeze {f} but the shared freeze_lower is {}; arms may differ only in encoder initialization",
                    arm.id, t.freeze_lower
                )));
            }
            if let Some(lr) = arm.lr.filter(|&lr| lr != t.lr) {
                return Err(Error::ArmContract(format!(
                    "arm {:?} sets lr {lr} but the shared lr is {}; arms may differ only in encoder initialization",
                    arm.id, t.lr
                )));
            }
            if let Some(e) = arm.epochs.filter(|&e| e != t.epochs) {
                return Err(Error::ArmContract(format!(
                    "arm {:?} sets epochs {e} but the shared value is {}; arms may differ only in encoder initialization",
                    arm.id, t.epochs
                )));
            }
            if let Some(b) = arm.batch_size.filter(|&b| b != t.batch_size) {
                return Err(Error::ArmContract(format!(
                    "arm {:?} sets batch_size {b} but the shared value is {}; arms may differ only in encoder initialization",
                    arm.id, t.batch_size
                )));
            }
        }
        if let TrajsetSpec::Build { epsilon } = self.trajset {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(Error::Config(format!(
                    "trajectory-set epsilon must be positive, got {epsilon}"
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization, without the output
    /// directory so the same experiment hashes alike wherever it is written.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        })
        .expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.training.epochs,
            lr: self.training.lr,
            batch_size: self.training.batch_size,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn pretrain_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.pretrain.epochs,
            lr: self.pretrain.lr,
            batch_size: self.pretrain.batch_size,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 60/20/20 split from a hash of the instance index.
pub fn split_of(index: usize) -> Split {
    match mix(index as u64) % 100 {
        0..60 => Split::Train,
        60..80 => Split::Val,
        _ => Split::Test,
    }
}

/// Indices per split, each in ascending order.
pub fn split_indices(count: usize) -> [Vec<usize>; 3] {
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for i in 0..count {
        out[split_of(i) as usize].push(i);
    }
    out
}
