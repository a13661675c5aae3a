//! Class activation maps: `M_c(x, y) = sum_k w[c, k] f_k(x, y)` over the
//! appearance maps that feed global average pooling.
//!
//! Heads over the concatenated geometry + appearance vector only use the
//! weight columns that multiply appearance features, since geometry features
//! have no spatial layout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::image::to_byte;
use crate::data::Image;
use crate::error::{ensure, MgaError, Result};
use crate::groups::CoarseGroup;
use crate::models::{expert_prefix, ArchConfig, CanModel};
use crate::nn::{Ctx, ParameterStore, Tensor};

/// Classifier whose weights define the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CamHead {
    CanGender,
    DgnGender,
    InGender,
    Expert(CoarseGroup),
}

impl CamHead {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "can" => Some(CamHead::CanGender),
            "dgn" => Some(CamHead::DgnGender),
            "in" => Some(CamHead::InGender),
            other => CoarseGroup::parse(other).map(CamHead::Expert),
        }
    }

    pub fn name(self) -> String {
        match self {
            CamHead::CanGender => "can".into(),
            CamHead::DgnGender => "dgn".into(),
            CamHead::InGender => "in".into(),
            CamHead::Expert(g) => g.name().into(),
        }
    }

    /// Training stage whose checkpoint holds this head.
    pub fn required_stage(self) -> usize {
        match self {
            CamHead::CanGender | CamHead::DgnGender => 1,
            CamHead::InGender => 2,
            CamHead::Expert(_) => 3,
        }
    }

    /// Weight matrix name and the column where appearance features start.
    pub fn weight_slice(self, arch: &ArchConfig) -> Result<(String, usize)> {
        match self {
            CamHead::CanGender => Ok(("can.head.gender.weight".into(), 0)),
            CamHead::InGender => Ok(("in.head.gender.weight".into(), arch.dgn_features())),
            CamHead::Expert(g) => Ok((format!("{}.weight", expert_prefix(g)), arch.dgn_features())),
            CamHead::DgnGender => Err(MgaError::Contract(
                "the geometry head has no spatial trunk feeding global average pooling".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamMap {
    pub height: usize,
    pub width: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

impl CamMap {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Bilinear resize with aligned pixel centers, edge-clamped.
    pub fn upsample(&self, height: usize, width: usize) -> CamMap {
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let (y0, ty) = (fy.floor() as usize, fy - fy.floor());
            let y1 = (y0 + 1).min(self.height - 1);
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let (x0, tx) = (fx.floor() as usize, fx - fx.floor());
                let x1 = (x0 + 1).min(self.width - 1);
                let top = self.at(y0, x0) * (1.0 - tx) + self.at(y0, x1) * tx;
                let bottom = self.at(y1, x0) * (1.0 - tx) + self.at(y1, x1) * tx;
                values.push(top * (1.0 - ty) + bottom * ty);
            }
        }
        CamMap { height, width, values }
    }

    /// Grayscale image with the map's range stretched to `[0, 255]`.
    pub fn to_image(&self) -> Image {
        let (lo, hi) = (self.min(), self.max());
        let span = if hi > lo { hi - lo } else { 1.0 };
        let bytes = self.values.iter().map(|v| to_byte((v - lo) / span)).collect();
        Image::new(self.width, self.height, 1, bytes).expect("map extents are positive")
    }
}

/// Weighted channel sum of one sample's maps `[K, h, w]` with `weights[K]`.
pub fn weighted_map_sum(maps: &Tensor, weights: &[f64]) -> Result<CamMap> {
    let s = maps.shape();
    ensure!(s.len() == 3, Dimension, "feature maps must be [K, h, w], got {s:?}");
    let (k, h, w) = (s[0], s[1], s[2]);
    ensure!(
        weights.len() == k,
        Dimension,
        "{} weights for {k} feature channels",
        weights.len()
    );
    let mut values = vec![0.0; h * w];
    for (c, wk) in weights.iter().enumerate() {
        let plane = &maps.data()[c * h * w..(c + 1) * h * w];
        values.iter_mut().zip(plane).for_each(|(v, f)| *v += wk * f);
    }
    Ok(CamMap {
        height: h,
        width: w,
        values,
    })
}

/// Raw and upsampled maps for one image and target class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cam {
    pub head: CamHead,
    pub class: usize,
    pub raw: CamMap,
    pub upsampled: CamMap,
}

/// Computes the map of `head` for class `class` (0 male, 1 female) on a
/// single image given as `[C, H, W]` planar values.
pub fn compute_cam(
    arch: &ArchConfig,
    store: &ParameterStore,
    image: &Tensor,
    class: usize,
    head: CamHead,
) -> Result<Cam> {
    let (weight_name, offset) = head.weight_slice(arch)?;
    let s = image.shape();
    ensure!(s.len() == 3, Dimension, "compute_cam takes one [C, H, W] image, got {s:?}");
    let batch = image.clone().reshape(&[1, s[0], s[1], s[2]])?;
    let trunk = CanModel::new(arch).trunk.forward(store, &batch, &mut Ctx::infer())?;
    let w = store.get(&weight_name)?;
    ensure!(class < w.rows(), Contract, "class {class} out of range for `{weight_name}`");
    let channels = trunk.maps.shape()[1];
    ensure!(
        offset + channels <= w.row_len(),
        Dimension,
        "`{weight_name}` has {} columns, need {} appearance columns from {offset}",
        w.row_len(),
        channels
    );
    let weights = &w.row(class)[offset..offset + channels];
    let map_shape = trunk.maps.shape()[1..].to_vec();
    let maps = trunk.maps.reshape(&map_shape)?;
    let raw = weighted_map_sum(&maps, weights)?;
    let upsampled = raw.upsample(s[1], s[2]);
    Ok(Cam {
        head,
        class,
        raw,
        upsampled,
    })
}

#[derive(Serialize)]
struct Sidecar<'a> {
    head: CamHead,
    class: usize,
    raw_height: usize,
    raw_width: usize,
    height: usize,
    width: usize,
    min: f64,
    max: f64,
    raw: &'a [f64],
    upsampled: &'a [f64],
}

/// Writes `{stem}.pgm` (upsampled map, min-max scaled), `{stem}.raw.pgm`
/// and `{stem}.json` with both maps and their ranges.
pub fn export_cam(cam: &Cam, dir: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| MgaError::io(dir, e))?;
    cam.upsampled.to_image().save(&dir.join(format!("{stem}.pgm")))?;
    cam.raw.to_image().save(&dir.join(format!("{stem}.raw.pgm")))?;
    let sidecar = Sidecar {
        head: cam.head,
        class: cam.class,
        raw_height: cam.raw.height,
        raw_width: cam.raw.width,
        height: cam.upsampled.height,
        width: cam.upsampled.width,
        min: cam.upsampled.min(),
        max: cam.upsampled.max(),
        raw: &cam.raw.values,
        upsampled: &cam.upsampled.values,
    };
    let path = dir.join(format!("{stem}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"))
        .map_err(|e| MgaError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_channel_identity() {
        let maps = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(weighted_map_sum(&maps, &[1.0]).unwrap().values, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(weighted_map_sum(&maps, &[0.0]).unwrap().values, vec![0.0; 4]);
    }

    #[test]
    fn two_channel_hand_example() {
        let maps = Tensor::new(&[2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 0.5, 0.0, -1.0, 2.0]).unwrap();
        let m = weighted_map_sum(&maps, &[2.0, -1.0]).unwrap();
        // 2*[1,2,3,4] - [0.5,0,-1,2]
        assert_eq!(m.values, vec![1.5, 4.0, 7.0, 6.0]);
    }

    #[test]
    fn upsampling_constant_and_corners() {
        let m = CamMap {
            height: 2,
            width: 2,
            values: vec![0.0, 1.0, 2.0, 3.0],
        };
        let u = m.upsample(4, 4);
        assert_eq!(u.at(0, 0), 0.0);
        assert_eq!(u.at(3, 3), 3.0);
        assert!((u.at(1, 1) - 0.75).abs() < 1e-12);
        let c = CamMap {
            height: 3,
            width: 2,
            values: vec![5.0; 6],
        };
        assert!(c.upsample(7, 9).values.iter().all(|v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn geometry_head_is_rejected() {
        assert!(matches!(
            CamHead::DgnGender.weight_slice(&ArchConfig::desk()),
            Err(MgaError::Contract(_))
        ));
    }
}
