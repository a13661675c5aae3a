//! Joint image/landmark transforms used for alignment and augmentation.

use rand::Rng;

use crate::data::SampleRecord;
use crate::error::Result;
use crate::geometry::align_rotation;
use crate::pipeline::AugmentConfig;

/// Mirrors the image (`x -> width - 1 - x`) and the landmarks, swapping
/// left/right landmark partners. Labels are unchanged.
pub fn flip_record(r: &SampleRecord) -> SampleRecord {
    let axis = (r.image.width() as f64 - 1.0) / 2.0;
    SampleRecord {
        image: r.image.flip_horizontal(),
        landmarks: r.landmarks.mirror_about(axis),
        ..r.clone()
    }
}

/// Rotates image and landmarks together by `angle` radians about `center`.
pub fn rotate_record(r: &SampleRecord, angle: f64, center: [f64; 2]) -> SampleRecord {
    SampleRecord {
        image: r.image.rotate(angle, center),
        landmarks: r.landmarks.rotate(angle, center),
        ..r.clone()
    }
}

/// Rotates a record so its eye centers are level.
pub fn align_record(r: &SampleRecord) -> Result<SampleRecord> {
    let (aligned, angle) = align_rotation(&r.landmarks)?;
    let (re, le) = (r.landmarks.right_eye_center(), r.landmarks.left_eye_center());
    let mid = [(re[0] + le[0]) / 2.0, (re[1] + le[1]) / 2.0];
    Ok(SampleRecord {
        image: r.image.rotate(angle, mid),
        landmarks: aligned,
        ..r.clone()
    })
}

/// Rescales a record's image to `size x size`, mapping landmarks with it.
pub fn resize_record(r: &SampleRecord, size: usize) -> SampleRecord {
    let (w, h) = (r.image.width(), r.image.height());
    if w == size && h == size {
        return r.clone();
    }
    let (sx, sy) = (size as f64 / w as f64, size as f64 / h as f64);
    SampleRecord {
        image: r.image.resize(size, size),
        landmarks: r.landmarks.map(|[x, y]| [(x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5]),
        ..r.clone()
    }
}

/// Random horizontal flip, then a random rotation about the image center.
pub fn augment(r: &SampleRecord, cfg: &AugmentConfig, rng: &mut impl Rng) -> SampleRecord {
    let flip = rng.gen_bool(cfg.flip_probability);
    let max = cfg.max_rotation_deg.to_radians();
    let angle = if max > 0.0 { rng.gen_range(-max..=max) } else { 0.0 };
    let base = if flip { flip_record(r) } else { r.clone() };
    let center = [
        (r.image.width() as f64 - 1.0) / 2.0,
        (r.image.height() as f64 - 1.0) / 2.0,
    ];
    rotate_record(&base, angle, center)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};
    use crate::geometry::{build_feature, GeometryConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> SampleRecord {
        let cfg = SynthConfig {
            samples: 1,
            ..SynthConfig::default()
        };
        generate_synthetic(&cfg).unwrap().remove(0)
    }

    #[test]
    fn flip_twice_is_identity() {
        let r = sample();
        let twice = flip_record(&flip_record(&r));
        assert_eq!(twice.image, r.image);
        for (a, b) in twice.landmarks.points().iter().zip(r.landmarks.points()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && a[1] == b[1]);
        }
    }

    #[test]
    fn zero_rotation_is_identity() {
        let r = sample();
        let cfg = AugmentConfig {
            enabled: true,
            flip_probability: 0.0,
            max_rotation_deg: 0.0,
        };
        assert_eq!(augment(&r, &cfg, &mut ChaCha8Rng::seed_from_u64(1)), r);
    }

    #[test]
    fn augmentation_keeps_labels_and_geometry() {
        let r = sample();
        let g = GeometryConfig::default();
        let base = build_feature(&r.landmarks, &g).unwrap();
        let flipped = build_feature(&flip_record(&r).landmarks, &g).unwrap();
        let max = base
            .vector
            .iter()
            .zip(&flipped.vector)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max < 1e-9, "flip changed the feature by {max}");
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let a = augment(&r, &AugmentConfig::default(), &mut rng);
            assert_eq!((a.age, a.gender, &a.subject), (r.age, r.gender, &r.subject));
            let f = build_feature(&a.landmarks, &g).unwrap();
            let d = base.vector.iter().zip(&f.vector).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(d < 1e-9);
        }
    }

    #[test]
    fn alignment_levels_the_eyes() {
        let r = align_record(&sample()).unwrap();
        let (re, le) = (r.landmarks.right_eye_center(), r.landmarks.left_eye_center());
        assert!((re[1] - le[1]).abs() < 1e-9);
        assert!(re[0] < le[0]);
    }
}
