use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, MgaError, Result};
use crate::groups::AgeGroupScheme;
use crate::losses::LossWeights;
use crate::models::ArchConfig;

/// Optimizer and schedule settings for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageHyper {
    pub epochs: usize,
    /// Clipped to the dataset size when the slice is smaller than one batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Inverse-time decay per update step.
    pub decay: f64,
    pub weights: LossWeights,
    /// Normalize with batch statistics and update the running ones. When
    /// off, batch norm runs as at inference and its statistics stay fixed.
    #[serde(default = "enabled")]
    pub batch_stats: bool,
}

fn enabled() -> bool {
    true
}

impl StageHyper {
    fn new(epochs: usize, batch_size: usize, learning_rate: f64, weights: LossWeights) -> Self {
        Self {
            epochs,
            batch_size,
            learning_rate,
            decay: 5e-4,
            weights,
            batch_stats: true,
        }
    }

    fn validate(&self, stage: usize) -> Result<()> {
        ensure!(self.batch_size >= 2, Config, "stage {stage}: batch_size must be at least 2");
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            Config,
            "stage {stage}: learning_rate must be positive"
        );
        ensure!(self.decay >= 0.0, Config, "stage {stage}: decay must be non-negative");
        self.weights.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub flip_probability: f64,
    /// Rotation angles are drawn uniformly from `±max_rotation_deg`.
    pub max_rotation_deg: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            flip_probability: 0.5,
            max_rotation_deg: 40.0,
        }
    }
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub folds: usize,
    pub arch: ArchConfig,
    pub groups: AgeGroupScheme,
    pub augment: AugmentConfig,
    /// Rotate each image so the eyes are level before augmentation.
    pub align_images: bool,
    /// After every epoch of every stage, also record the end-to-end MGA
    /// objective on the unaugmented training set.
    pub track_objective: bool,
    pub stage1: StageHyper,
    pub stage2: StageHyper,
    pub stage3: StageHyper,
    pub stage4: StageHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl TrainConfig {
    /// Batch sizes and learning rates of the published settings, on the
    /// desk architecture.
    pub fn reference() -> Self {
        let unit = LossWeights::default();
        Self {
            seed: 7,
            folds: 5,
            arch: ArchConfig::desk(),
            groups: AgeGroupScheme::default(),
            augment: AugmentConfig::default(),
            align_images: true,
            track_objective: false,
            stage1: StageHyper::new(10, 128, 1e-2, unit),
            stage2: StageHyper::new(10, 256, 1e-2, unit),
            stage3: StageHyper::new(
                10,
                128,
                1e-3,
                LossWeights {
                    alpha1: 1e-4,
                    beta1: 1e-4,
                    ..unit
                },
            ),
            stage4: StageHyper {
                batch_stats: false,
                ..StageHyper::new(10, 128, 1e-3, unit)
            },
        }
    }

    /// Smaller batches and fewer epochs, sized so a few thousand 64x64 faces
    /// train on one core in minutes.
    pub fn desk() -> Self {
        let mut cfg = Self::reference();
        for (h, epochs) in [
            (&mut cfg.stage1, 8),
            (&mut cfg.stage2, 6),
            (&mut cfg.stage3, 10),
            (&mut cfg.stage4, 4),
        ] {
            h.epochs = epochs;
            h.batch_size = 32;
        }
        cfg
    }

    pub fn stage(&self, k: usize) -> Result<&StageHyper> {
        match k {
            1 => Ok(&self.stage1),
            2 => Ok(&self.stage2),
            3 => Ok(&self.stage3),
            4 => Ok(&self.stage4),
            _ => Err(MgaError::Config(format!("stage must be 1-4, got {k}"))),
        }
    }

    pub fn stage_mut(&mut self, k: usize) -> Result<&mut StageHyper> {
        match k {
            1 => Ok(&mut self.stage1),
            2 => Ok(&mut self.stage2),
            3 => Ok(&mut self.stage3),
            4 => Ok(&mut self.stage4),
            _ => Err(MgaError::Config(format!("stage must be 1-4, got {k}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.groups.validate()?;
        ensure!(
            self.groups.fine_groups == self.arch.fine_groups,
            Config,
            "groups.fine_groups ({}) must match arch.fine_groups ({})",
            self.groups.fine_groups,
            self.arch.fine_groups
        );
        ensure!(self.folds >= 2, Config, "folds must be at least 2");
        ensure!(
            (0.0..=1.0).contains(&self.augment.flip_probability),
            Config,
            "flip_probability must lie in [0, 1]"
        );
        ensure!(
            self.augment.max_rotation_deg >= 0.0 && self.augment.max_rotation_deg <= 180.0,
            Config,
            "max_rotation_deg must lie in [0, 180]"
        );
        for k in 1..=4 {
            self.stage(k)?.validate(k)?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("train config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| MgaError::Config(format!("training config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MgaError::io(path, e))?;
        Self::from_toml(&text)
    }
}
