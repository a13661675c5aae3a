//! Turning records into network inputs.

use rand::Rng;

use crate::data::SampleRecord;
use crate::error::{MgaError, Result};
use crate::geometry::build_feature;
use crate::losses::one_hot;
use crate::models::ArchConfig;
use crate::nn::Tensor;
use crate::pipeline::augment::{align_record, augment, resize_record};
use crate::pipeline::{AugmentConfig, TrainConfig};

/// A record resized (and optionally aligned) for the network, with its
/// geometric feature and label indices precomputed. The geometric feature
/// is unchanged by flips and rotations, so augmentation only touches the
/// image.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub record: SampleRecord,
    pub feature: Vec<f64>,
    pub age: f64,
    pub gender: usize,
    pub coarse: usize,
    pub fine: usize,
}

pub fn prepare_one(r: &SampleRecord, cfg: &TrainConfig) -> Result<PreparedSample> {
    r.validate()?;
    let mut record = resize_record(r, cfg.arch.image_size);
    if cfg.align_images {
        record = align_record(&record)?;
    }
    let feature = build_feature(&record.landmarks, &cfg.arch.geometry)?.vector;
    Ok(PreparedSample {
        feature,
        age: r.age,
        gender: r.gender.index(),
        coarse: cfg.groups.coarse(r.age)?.index(),
        fine: cfg.groups.fine(r.age),
        record,
    })
}

pub fn prepare(records: &[SampleRecord], cfg: &TrainConfig) -> Result<Vec<PreparedSample>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            prepare_one(r, cfg).map_err(|e| match e {
                MgaError::Geometry(m) => MgaError::Geometry(format!("record {i} ({}): {m}", r.image_ref)),
                other => other,
            })
        })
        .collect()
}

/// Network-ready tensors for a mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[N, C, H, W]`; absent for geometry-only batches.
    pub images: Option<Tensor>,
    /// `[N, FEATURE_LEN]`.
    pub features: Tensor,
    pub ages: Vec<f64>,
    pub gender: Tensor,
    pub coarse: Tensor,
    pub fine: Tensor,
    pub gender_idx: Vec<usize>,
    pub coarse_idx: Vec<usize>,
    pub fine_idx: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn images(&self) -> Result<&Tensor> {
        self.images
            .as_ref()
            .ok_or_else(|| MgaError::State("batch was built without images".into()))
    }
}

/// Builds a batch. When `augment` is given each image is randomly flipped and
/// rotated with `rng`.
pub fn make_batch(
    samples: &[&PreparedSample],
    arch: &ArchConfig,
    with_images: bool,
    augment_cfg: Option<&AugmentConfig>,
    rng: &mut impl Rng,
) -> Result<Batch> {
    let n = samples.len();
    let images = if with_images {
        let side = arch.image_size;
        let mut data = Vec::with_capacity(n * arch.in_channels * side * side);
        for s in samples {
            let planar = match augment_cfg {
                Some(a) if a.enabled => augment(&s.record, a, rng).image.to_planar(arch.in_channels)?,
                _ => s.record.image.to_planar(arch.in_channels)?,
            };
            data.extend(planar);
        }
        Some(Tensor::new(&[n, arch.in_channels, side, side], data)?)
    } else {
        None
    };
    let features = Tensor::new(
        &[n, arch.dgn_input()],
        samples.iter().flat_map(|s| s.feature.iter().copied()).collect(),
    )?;
    let gender_idx: Vec<usize> = samples.iter().map(|s| s.gender).collect();
    let coarse_idx: Vec<usize> = samples.iter().map(|s| s.coarse).collect();
    let fine_idx: Vec<usize> = samples.iter().map(|s| s.fine).collect();
    Ok(Batch {
        images,
        features,
        ages: samples.iter().map(|s| s.age).collect(),
        gender: one_hot(&gender_idx, 2)?,
        coarse: one_hot(&coarse_idx, arch.coarse_groups)?,
        fine: one_hot(&fine_idx, arch.fine_groups)?,
        gender_idx,
        coarse_idx,
        fine_idx,
    })
}

/// Splits `0..n` (already shuffled into `order`) into batches of at most
/// `batch_size`, folding a trailing singleton into the previous batch so
/// batch normalization always sees at least two samples.
pub fn batch_ranges(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    let b = batch_size.clamp(1, n.max(1));
    let mut out: Vec<std::ops::Range<usize>> = (0..n).step_by(b).map(|s| s..(s + b).min(n)).collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().end = last.end;
    }
    out
}
