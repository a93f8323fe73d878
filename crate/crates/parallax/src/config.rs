//! Run configuration: a single structured TOML file drives every
//! subcommand. All published constants appear here as defaults; a run
//! writes its fully resolved config next to its outputs so results are
//! reproducible from that file alone.

use crate::baseline::HsConfig;
use crate::data::SceneFamily;
use crate::error::{Error, Result};
use crate::net::{NetworkConfig, ScaleProfile};
use crate::train::OptimizerConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    Unsupervised,
    ProxyHs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    /// Smoothness prior strength.
    pub gamma: f64,
    /// Depth clamp `[d_min, d_max]` in metres for evaluation.
    pub clamp: [f64; 2],
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            gamma: 0.01,
            clamp: [1.0, 50.0],
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Directory with a dataset manifest (from the synth subcommand).
    pub dataset_dir: Option<PathBuf>,
    /// Inline synthetic family (alternative to `dataset_dir`).
    pub family: Option<SceneFamily>,
    /// Samples generated from the family for training.
    pub train_count: usize,
    /// Extra held-out samples for evaluation after training.
    pub holdout_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub coarse_epochs: usize,
    pub fine_epochs: usize,
    /// Augmented fine-tuning epochs after the ladder (0 disables).
    pub finetune_epochs: usize,
    /// Checkpoint every n epochs (stage ends always checkpoint).
    pub checkpoint_every: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        // desk-scale budget; the paper profile trains 100 epochs per stage
        ScheduleConfig {
            coarse_epochs: 200,
            fine_epochs: 100,
            finetune_epochs: 0,
            checkpoint_every: 50,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ProxyConfig {
    /// Mask consistency-check failures out of the labels.
    pub inject_holes: bool,
    pub consistency_px: f64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            inject_holes: true,
            consistency_px: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub profile: ScaleProfile,
    pub seed: u64,
    /// Worker threads for batch evaluation (0 = library default).
    pub threads: usize,
    pub mode: TrainingMode,
    pub output_dir: PathBuf,
    /// Resolved from `profile` when absent.
    pub network: Option<NetworkConfig>,
    pub optimizer: OptimizerConfig,
    pub geometry: GeometryConfig,
    pub data: DataConfig,
    pub schedule: ScheduleConfig,
    pub baseline: HsConfig,
    pub proxy: ProxyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            profile: ScaleProfile::Desk,
            seed: 7,
            threads: 0,
            mode: TrainingMode::Unsupervised,
            output_dir: PathBuf::from("runs/out"),
            network: None,
            optimizer: OptimizerConfig::default(),
            geometry: GeometryConfig::default(),
            data: DataConfig {
                dataset_dir: None,
                family: Some(SceneFamily::desk_default()),
                train_count: 24,
                holdout_count: 8,
            },
            schedule: ScheduleConfig::default(),
            baseline: HsConfig::default(),
            proxy: ProxyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(format!("config serialize: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Fills profile-derived defaults and validates everything, including
    /// that referenced paths exist.
    pub fn resolved(mut self) -> Result<Self> {
        let channels = match (&self.data.dataset_dir, &self.data.family) {
            (Some(dir), _) => {
                if !dir.join("manifest.toml").is_file() {
                    return Err(Error::Config(format!(
                        "dataset manifest not found under {}",
                        dir.display()
                    )));
                }
                1 // synthetic datasets are grayscale; the manifest is re-read at load
            }
            (None, Some(_)) => 1,
            (None, None) => {
                return Err(Error::Config(
                    "config needs either data.dataset_dir or data.family".into(),
                ))
            }
        };
        if self.network.is_none() {
            self.network = Some(NetworkConfig::profile(self.profile, channels));
        }
        let net = self.network.as_ref().expect("just set");
        net.audit()?;
        self.optimizer.validate()?;
        self.baseline.validate()?;
        if self.geometry.gamma < 0.0 {
            return Err(Error::Config("gamma must be non-negative".into()));
        }
        if !(self.geometry.clamp[0] > 0.0 && self.geometry.clamp[0] < self.geometry.clamp[1]) {
            return Err(Error::Config(format!(
                "depth clamp must satisfy 0 < min < max, got {:?}",
                self.geometry.clamp
            )));
        }
        if self.data.dataset_dir.is_none() && self.data.train_count == 0 {
            return Err(Error::Config("data.train_count must be positive".into()));
        }
        Ok(self)
    }

    /// SHA-256 of the resolved TOML text; embedded in checkpoints.
    pub fn hash(&self) -> Result<String> {
        let text = self.to_toml()?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }
}

/// Hash of an arbitrary spec file's contents (dataset provenance).
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_resolves_and_round_trips() {
        let cfg = RunConfig::default().resolved().unwrap();
        assert!(cfg.network.is_some());
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn published_constants_are_the_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.geometry.gamma, 0.01);
        assert_eq!(cfg.optimizer.lr0, 0.01);
        assert_eq!(cfg.optimizer.momentum, 0.9);
        assert_eq!(cfg.optimizer.weight_decay, 0.0005);
        assert_eq!(cfg.optimizer.alpha, 0.0005);
        assert_eq!(cfg.optimizer.stage_lr_divisor, 4.0);
        assert_eq!(cfg.geometry.clamp, [1.0, 50.0]);
        assert_eq!(cfg.baseline.pyramid_levels, 6);
        assert_eq!(cfg.baseline.pyramid_scale, 0.5);
        assert_eq!(cfg.baseline.warp_iterations, 1000);
    }

    #[test]
    fn missing_data_source_is_rejected() {
        let cfg = RunConfig {
            data: DataConfig::default(),
            ..RunConfig::default()
        };
        assert!(cfg.resolved().is_err());
    }

    #[test]
    fn missing_dataset_dir_is_rejected() {
        let cfg = RunConfig {
            data: DataConfig {
                dataset_dir: Some(PathBuf::from("/nonexistent/dataset")),
                ..DataConfig::default()
            },
            ..RunConfig::default()
        };
        assert!(cfg.resolved().is_err());
    }
}
