//! Synthetic faces whose appearance gender cue fades in youth and old age
//! while the landmark gender cue keeps a constant strength.
//!
//! Each face is drawn in template units (see [`frontal_template`]) and mapped
//! to pixels by a random similarity transform plus a mild yaw. The image
//! carries horizontal stripes over the skin whose contrast is
//! `texture_base ± appearance_gain * strength(age)` (plus for female), and a
//! skin brightness that rises with age. The landmarks carry a jaw width that
//! is `1 ± geometry_strength` (plus for male) and a lower face that lengthens
//! with age.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Gender, Image, SampleRecord};
use crate::error::{ensure, MgaError, Result};
use crate::geometry::{frontal_template, LandmarkSet, Point};

/// Piecewise-linear strength over age: `weak` below `knots[0]`, ramping to
/// `strong` at `knots[1]`, flat until `knots[2]`, back to `weak` at
/// `knots[3]` and beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppearanceProfile {
    pub weak: f64,
    pub strong: f64,
    pub knots: [f64; 4],
}

impl Default for AppearanceProfile {
    fn default() -> Self {
        Self {
            weak: 0.15,
            strong: 1.0,
            knots: [15.0, 25.0, 45.0, 55.0],
        }
    }
}

impl AppearanceProfile {
    pub fn constant(s: f64) -> Self {
        Self {
            weak: s,
            strong: s,
            ..Self::default()
        }
    }

    pub fn strength(&self, age: f64) -> f64 {
        let [k0, k1, k2, k3] = self.knots;
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t.clamp(0.0, 1.0);
        if age < k1 {
            lerp(self.weak, self.strong, (age - k0) / (k1 - k0))
        } else if age <= k2 {
            self.strong
        } else {
            lerp(self.strong, self.weak, (age - k2) / (k3 - k2))
        }
    }
}

/// Random pose applied to every face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseJitter {
    /// In-plane rotation drawn from `±rotation_deg`.
    pub rotation_deg: f64,
    /// Relative scale drawn from `1 ± scale`.
    pub scale: f64,
    /// Pixel shift drawn from `±translation` per axis.
    pub translation: f64,
    /// One half face is widened and the other narrowed by up to this fraction.
    pub yaw: f64,
}

impl Default for PoseJitter {
    fn default() -> Self {
        Self {
            rotation_deg: 10.0,
            scale: 0.05,
            translation: 2.0,
            yaw: 0.15,
        }
    }
}

impl PoseJitter {
    pub fn none() -> Self {
        Self {
            rotation_deg: 0.0,
            scale: 0.0,
            translation: 0.0,
            yaw: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub samples: usize,
    pub image_size: usize,
    pub channels: usize,
    pub seed: u64,
    /// Records sharing a subject id share gender, face shape and skin tone.
    pub samples_per_subject: usize,
    /// Ages are drawn uniformly from `[min, max)`.
    pub age_range: [f64; 2],
    pub appearance: AppearanceProfile,
    /// Half the female/male stripe-contrast gap at full strength.
    pub appearance_gain: f64,
    pub texture_base: f64,
    /// Relative jaw-width difference between genders.
    pub geometry_strength: f64,
    /// Multiplies every nuisance term: pixel noise, stripe-contrast jitter,
    /// landmark jitter, subject face-width spread and skin-tone spread.
    pub noise: f64,
    pub pose: PoseJitter,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            samples: 3000,
            image_size: 64,
            channels: 3,
            seed: 7,
            samples_per_subject: 2,
            age_range: [0.0, 80.0],
            appearance: AppearanceProfile::default(),
            appearance_gain: 0.1,
            texture_base: 0.15,
            geometry_strength: 0.04,
            noise: 1.0,
            pose: PoseJitter::default(),
        }
    }
}

const PIXEL_NOISE: f64 = 0.03;
const CONTRAST_JITTER: f64 = 0.04;
const LANDMARK_JITTER: f64 = 0.01;
const WIDTH_SPREAD: f64 = 0.04;
const SKIN_SPREAD: f64 = 0.03;
const STRIPE_PERIOD: f64 = 0.22;
const FACE_CENTER_Y: f64 = -0.05;
const FACE_AXES: [f64; 2] = [1.0, 1.08];
/// Pixels per template unit, as a fraction of the image side.
const FACE_SCALE: f64 = 0.27;
const TINT: [f64; 3] = [1.0, 0.92, 0.85];

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.image_size >= 16, Config, "synthetic image size must be at least 16");
        ensure!(self.channels == 1 || self.channels == 3, Config, "channels must be 1 or 3");
        ensure!(self.samples_per_subject >= 1, Config, "samples_per_subject must be positive");
        let p = &self.appearance;
        ensure!(
            (0.0..=1.0).contains(&p.weak) && (0.0..=1.0).contains(&p.strong),
            Config,
            "appearance strengths must lie in [0, 1]"
        );
        ensure!(
            p.knots.windows(2).all(|w| w[0] < w[1]),
            Config,
            "appearance knots must be strictly increasing"
        );
        ensure!(
            (0.0..=1.0).contains(&self.geometry_strength),
            Config,
            "geometry_strength must lie in [0, 1]"
        );
        ensure!(
            self.noise >= 0.0 && self.appearance_gain >= 0.0 && self.texture_base >= 0.0,
            Config,
            "noise, appearance_gain and texture_base must be non-negative"
        );
        let [lo, hi] = self.age_range;
        ensure!(0.0 <= lo && lo < hi && hi.is_finite(), Config, "age_range must satisfy 0 <= min < max");
        ensure!(
            self.pose.yaw >= 0.0 && self.pose.yaw < 0.5 && self.pose.scale >= 0.0 && self.pose.scale < 0.5,
            Config,
            "pose yaw and scale jitter must lie in [0, 0.5)"
        );
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| MgaError::Config(format!("synthetic config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

struct Subject {
    id: String,
    gender: Gender,
    width: f64,
    skin: f64,
}

struct Pose {
    center: Point,
    scale: f64,
    angle: f64,
    yaw: f64,
}

impl Pose {
    fn to_pixels(&self, q: Point) -> Point {
        let x = q[0] * if q[0] < 0.0 { 1.0 - self.yaw } else { 1.0 + self.yaw };
        let (s, c) = self.angle.sin_cos();
        [
            self.center[0] + self.scale * (c * x - s * q[1]),
            self.center[1] + self.scale * (s * x + c * q[1]),
        ]
    }

    fn to_face(&self, p: Point) -> Point {
        let (dx, dy) = ((p[0] - self.center[0]) / self.scale, (p[1] - self.center[1]) / self.scale);
        let (s, c) = self.angle.sin_cos();
        let x = c * dx + s * dy;
        let y = -s * dx + c * dy;
        [x / if x < 0.0 { 1.0 - self.yaw } else { 1.0 + self.yaw }, y]
    }
}

fn sign(g: Gender) -> f64 {
    match g {
        Gender::Male => -1.0,
        Gender::Female => 1.0,
    }
}

/// Landmarks in template units for a subject at `age`, before pose and jitter.
fn face_shape(subject: &Subject, age: f64, cfg: &SynthConfig) -> LandmarkSet {
    let jaw = 1.0 - cfg.geometry_strength * sign(subject.gender) + subject.width;
    let stretch = 1.0 + 0.25 * (age / 80.0 - 0.5);
    let t = frontal_template();
    let pts = t
        .points()
        .iter()
        .enumerate()
        .map(|(i, &[x, y])| {
            let x = if i < 17 { x * jaw } else { x };
            let y = if y > 0.1 { 0.1 + (y - 0.1) * stretch } else { y };
            [x, y]
        })
        .collect();
    LandmarkSet::new(pts).expect("68 finite points")
}

fn render(cfg: &SynthConfig, shape: &LandmarkSet, pose: &Pose, contrast: f64, skin: f64, rng: &mut impl Rng) -> Image {
    let size = cfg.image_size;
    let eyes = [shape.right_eye_center(), shape.left_eye_center()];
    let mouth = shape.centroid(49..=68);
    let pixel_noise = Normal::new(0.0, PIXEL_NOISE * cfg.noise + f64::MIN_POSITIVE).expect("finite sigma");
    let mut values = Vec::with_capacity(size * size * cfg.channels);
    for y in 0..size {
        for x in 0..size {
            let q = pose.to_face([x as f64, y as f64]);
            let ex = q[0] / FACE_AXES[0];
            let ey = (q[1] - FACE_CENTER_Y) / FACE_AXES[1];
            let v = if ex * ex + ey * ey > 1.0 {
                0.08
            } else if eyes.iter().any(|e| (q[0] - e[0]).hypot(q[1] - e[1]) < 0.1) {
                0.05
            } else if ((q[0] - mouth[0]) / 0.25).powi(2) + ((q[1] - mouth[1]) / 0.06).powi(2) < 1.0 {
                0.15
            } else {
                skin + contrast * (std::f64::consts::TAU * q[1] / STRIPE_PERIOD).sin()
            };
            let v = v + pixel_noise.sample(rng);
            for tint in TINT.iter().take(cfg.channels) {
                values.push(v * tint);
            }
        }
    }
    Image::from_unit(size, size, cfg.channels, &values).expect("rendered extents match")
}

/// Generates `cfg.samples` records; bit-identical for identical configs.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Vec<SampleRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std = |s: f64| Normal::new(0.0, s * cfg.noise + f64::MIN_POSITIVE).expect("finite sigma");
    let (width_d, skin_d, contrast_d, jitter_d) = (
        std(WIDTH_SPREAD),
        std(SKIN_SPREAD),
        std(CONTRAST_JITTER),
        std(LANDMARK_JITTER),
    );
    let n_subjects = cfg.samples.div_ceil(cfg.samples_per_subject);
    let subjects: Vec<Subject> = (0..n_subjects)
        .map(|s| Subject {
            id: format!("s{s:05}"),
            gender: if rng.gen_bool(0.5) { Gender::Female } else { Gender::Male },
            width: width_d.sample(&mut rng),
            skin: skin_d.sample(&mut rng),
        })
        .collect();
    let size = cfg.image_size as f64;
    let p = &cfg.pose;
    let uniform = |rng: &mut ChaCha8Rng, half: f64| if half > 0.0 { rng.gen_range(-half..half) } else { 0.0 };
    let mut records = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        let subject = &subjects[i / cfg.samples_per_subject];
        let age = rng.gen_range(cfg.age_range[0]..cfg.age_range[1]);
        let shape = face_shape(subject, age, cfg);
        let pose = Pose {
            center: [
                (size - 1.0) / 2.0 + uniform(&mut rng, p.translation),
                (size - 1.0) / 2.0 + uniform(&mut rng, p.translation),
            ],
            scale: FACE_SCALE * size * (1.0 + uniform(&mut rng, p.scale)),
            angle: uniform(&mut rng, p.rotation_deg).to_radians(),
            yaw: uniform(&mut rng, p.yaw),
        };
        let strength = cfg.appearance.strength(age);
        let contrast =
            (cfg.texture_base + cfg.appearance_gain * strength * sign(subject.gender) + contrast_d.sample(&mut rng))
                .max(0.0);
        let skin = 0.3 + 0.4 * age / 80.0 + subject.skin;
        let image = render(cfg, &shape, &pose, contrast, skin, &mut rng);
        let points = shape
            .points()
            .iter()
            .map(|&q| {
                let [x, y] = pose.to_pixels(q);
                [x + jitter_d.sample(&mut rng) * pose.scale, y + jitter_d.sample(&mut rng) * pose.scale]
            })
            .collect();
        let landmarks = LandmarkSet::new(points)?;
        records.push(SampleRecord {
            image_ref: format!("images/{}_{}.ppm", subject.id, i % cfg.samples_per_subject),
            image,
            landmarks,
            age,
            gender: subject.gender,
            subject: subject.id.clone(),
        });
    }
    Ok(records)
}
