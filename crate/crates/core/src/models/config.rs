use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, MgaError, Result};
use crate::geometry::{GeometryConfig, FEATURE_LEN};
use crate::nn::{Conv2d, MaxPool2d};

/// Architecture hyperparameters, persisted next to checkpoints as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    /// Square input side in pixels.
    pub image_size: usize,
    pub in_channels: usize,
    /// Filters per conv block before the width multiplier.
    pub base_filters: [usize; 3],
    pub width_multiplier: f64,
    pub kernels: [usize; 3],
    pub strides: [usize; 3],
    pub pool_size: usize,
    pub pool_stride: usize,
    /// Widths of the two hidden layers of the geometry network.
    pub dgn_hidden: [usize; 2],
    pub fine_groups: usize,
    pub coarse_groups: usize,
    /// The age head emits `age_offset + age_scale * (w . f + b)` years.
    pub age_offset: f64,
    pub age_scale: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    #[serde(default)]
    pub geometry: GeometryConfig,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ArchConfig {
    /// 227x227 inputs with 96/256/384 filters.
    pub fn reference() -> Self {
        Self {
            image_size: 227,
            in_channels: 3,
            base_filters: [96, 256, 384],
            width_multiplier: 1.0,
            kernels: [7, 5, 3],
            strides: [4, 1, 1],
            pool_size: 3,
            pool_stride: 2,
            dgn_hidden: [64, 64],
            fine_groups: 8,
            coarse_groups: 3,
            age_offset: 40.0,
            age_scale: 10.0,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
            geometry: GeometryConfig::default(),
        }
    }

    /// 64x64 inputs, filters scaled by 1/16 and 3x3 stride-1 kernels so three
    /// pooling stages still leave a 5x5 map.
    pub fn desk() -> Self {
        Self {
            image_size: 64,
            width_multiplier: 1.0 / 16.0,
            kernels: [3, 3, 3],
            strides: [1, 1, 1],
            ..Self::reference()
        }
    }

    pub fn filters(&self) -> [usize; 3] {
        self.base_filters
            .map(|f| ((f as f64 * self.width_multiplier).round() as usize).max(1))
    }

    /// Width of the appearance feature vector (GAP output).
    pub fn can_features(&self) -> usize {
        self.filters()[2]
    }

    pub fn dgn_input(&self) -> usize {
        FEATURE_LEN
    }

    pub fn dgn_features(&self) -> usize {
        self.dgn_hidden[1]
    }

    /// Length of the concatenated geometry + appearance vector.
    pub fn concat_features(&self) -> usize {
        self.dgn_features() + self.can_features()
    }

    /// Spatial extents after each conv and each pool, ending with the map
    /// that feeds global average pooling.
    pub fn spatial_trace(&self) -> Result<Vec<(usize, usize)>> {
        let mut hw = (self.image_size, self.image_size);
        let mut trace = vec![hw];
        let filters = self.filters();
        let mut channels = self.in_channels;
        for b in 0..3 {
            let conv = Conv2d::new("probe", channels, filters[b], (self.kernels[b], self.kernels[b]), self.strides[b]);
            hw = conv.output_hw(hw.0, hw.1).map_err(|_| {
                MgaError::Dimension(format!(
                    "a {}x{} input is too small for conv block {}",
                    self.image_size,
                    self.image_size,
                    b + 1
                ))
            })?;
            trace.push(hw);
            hw = MaxPool2d::new(self.pool_size, self.pool_stride)
                .output_hw(hw.0, hw.1)
                .map_err(|_| {
                    MgaError::Dimension(format!(
                        "a {}x{} input does not survive pooling stage {}",
                        self.image_size,
                        self.image_size,
                        b + 1
                    ))
                })?;
            trace.push(hw);
            channels = filters[b];
        }
        Ok(trace)
    }

    /// Spatial extent of the map that feeds global average pooling.
    pub fn cam_hw(&self) -> Result<(usize, usize)> {
        Ok(*self.spatial_trace()?.last().unwrap())
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.in_channels >= 1, Config, "in_channels must be positive");
        ensure!(
            self.width_multiplier > 0.0 && self.width_multiplier.is_finite(),
            Config,
            "width_multiplier must be positive"
        );
        ensure!(
            self.kernels.iter().chain(&self.strides).all(|&v| v >= 1),
            Config,
            "kernels and strides must be positive"
        );
        ensure!(self.pool_size >= 1 && self.pool_stride >= 1, Config, "pooling must be positive");
        ensure!(self.dgn_hidden.iter().all(|&v| v >= 1), Config, "dgn_hidden widths must be positive");
        ensure!(self.fine_groups >= 2, Config, "fine_groups must be at least 2");
        ensure!(self.coarse_groups == 3, Config, "the expert split needs exactly 3 coarse groups");
        ensure!(self.age_scale > 0.0, Config, "age_scale must be positive");
        ensure!(
            self.bn_eps > 0.0 && (0.0..1.0).contains(&self.bn_momentum),
            Config,
            "bn_eps must be positive and bn_momentum in [0, 1)"
        );
        self.spatial_trace().map_err(|e| MgaError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("arch config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| MgaError::Config(format!("architecture config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MgaError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| MgaError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_and_desk_traces() {
        let r = ArchConfig::reference();
        assert_eq!(r.filters(), [96, 256, 384]);
        assert_eq!(r.cam_hw().unwrap(), (4, 4));
        assert_eq!(r.concat_features(), 448);
        let d = ArchConfig::desk();
        assert_eq!(d.filters(), [6, 16, 24]);
        assert_eq!(d.cam_hw().unwrap(), (5, 5));
    }

    #[test]
    fn undersized_input_is_rejected() {
        let cfg = ArchConfig {
            image_size: 20,
            ..ArchConfig::desk()
        };
        assert!(matches!(cfg.spatial_trace(), Err(MgaError::Dimension(_))));
        assert!(matches!(cfg.validate(), Err(MgaError::Config(_))));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ArchConfig::reference();
        assert_eq!(ArchConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(ArchConfig::from_toml("image_size = 3").is_err());
    }
}
