use serde::{Deserialize, Serialize};

use crate::error::{ensure, MgaError, Result};
use crate::geometry::landmarks::{LandmarkSet, Point, MIRROR, NOSE_ROOT, NOSE_TIP, RIGHT_EYE_INNER, RIGHT_HALF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// How half-face coordinates are scaled after centering on the nose tip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Divide x and y by their population standard deviations over the half face.
    #[default]
    StdDev,
    /// Divide both axes by the nose-root to inner-eye-corner distance.
    NoseEye,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    #[serde(default)]
    pub scale: ScaleMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricFeature {
    /// `x1, y1, ..., xn, yn, d(1,2), d(1,3), ..., d(n-1,n)`.
    pub vector: Vec<f64>,
    pub side: Side,
    pub n: usize,
}

impl GeometricFeature {
    pub fn coordinates(&self) -> &[f64] {
        &self.vector[..2 * self.n]
    }

    pub fn distances(&self) -> &[f64] {
        &self.vector[2 * self.n..]
    }
}

/// Length of the feature vector for `n` half-face points.
pub const fn feature_len(n: usize) -> usize {
    2 * n + n * (n - 1) / 2
}

/// Length of the feature vector for the built-in half-face subset.
pub const FEATURE_LEN: usize = feature_len(RIGHT_HALF.len());

/// Rotates the landmarks about the midpoint of the eye centers so that both
/// eye centers share a y-coordinate, the right eye on the smaller-x side.
/// Returns the aligned set and the rotation applied (radians).
pub fn align_rotation(landmarks: &LandmarkSet) -> Result<(LandmarkSet, f64)> {
    let r = landmarks.right_eye_center();
    let l = landmarks.left_eye_center();
    let (dx, dy) = (l[0] - r[0], l[1] - r[1]);
    if dx.hypot(dy) <= f64::EPSILON * (1.0 + r[0].abs().max(r[1].abs())) {
        return Err(MgaError::Geometry("eye centers coincide; cannot align".into()));
    }
    let angle = -dy.atan2(dx);
    let mid = [(r[0] + l[0]) / 2.0, (r[1] + l[1]) / 2.0];
    Ok((landmarks.rotate(angle, mid), angle))
}

/// Picks the half face less foreshortened by yaw: the side whose eye center
/// lies horizontally farther from the nose tip. Ties go to the right side.
pub fn select_side(aligned: &LandmarkSet) -> Side {
    let nose = aligned.point(NOSE_TIP)[0];
    let right_span = (nose - aligned.right_eye_center()[0]).abs();
    let left_span = (aligned.left_eye_center()[0] - nose).abs();
    if left_span > right_span {
        Side::Left
    } else {
        Side::Right
    }
}

/// Reflects the left half across the vertical line through the nose tip and
/// orders it like [`RIGHT_HALF`].
pub fn project_to_right(aligned: &LandmarkSet) -> Vec<Point> {
    let axis = aligned.point(NOSE_TIP)[0];
    RIGHT_HALF
        .iter()
        .map(|&i| {
            let p = aligned.point(MIRROR[i - 1]);
            [2.0 * axis - p[0], p[1]]
        })
        .collect()
}

pub fn half_face(aligned: &LandmarkSet, side: Side) -> Vec<Point> {
    match side {
        Side::Right => RIGHT_HALF.iter().map(|&i| aligned.point(i)).collect(),
        Side::Left => project_to_right(aligned),
    }
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Centers on the nose point and scales each axis by the population standard
/// deviation of the half-face coordinates.
pub fn normalize_half(points: &[Point], nose: Point) -> Result<Vec<Point>> {
    ensure!(points.len() >= 2, Geometry, "need at least two half-face points");
    let sx = population_std(points.iter().map(|p| p[0]));
    let sy = population_std(points.iter().map(|p| p[1]));
    let scale_floor = 1e-12 * points.iter().map(|p| p[0].abs().max(p[1].abs())).fold(1.0, f64::max);
    if sx <= scale_floor || sy <= scale_floor {
        return Err(MgaError::Geometry(format!(
            "degenerate landmarks: standard deviation ({sx}, {sy}) is zero"
        )));
    }
    Ok(points.iter().map(|p| [(p[0] - nose[0]) / sx, (p[1] - nose[1]) / sy]).collect())
}

fn normalize_nose_eye(points: &[Point], nose: Point, nose_root: Point, eye_inner: Point) -> Result<Vec<Point>> {
    let d = (nose_root[0] - eye_inner[0]).hypot(nose_root[1] - eye_inner[1]);
    if d <= 0.0 {
        return Err(MgaError::Geometry("nose root and inner eye corner coincide".into()));
    }
    Ok(points.iter().map(|p| [(p[0] - nose[0]) / d, (p[1] - nose[1]) / d]).collect())
}

/// Euclidean distances `d(i, j)` for `i < j` in lexicographic order.
pub fn pairwise_distances(points: &[Point]) -> Vec<f64> {
    let n = points.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push((points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]));
        }
    }
    out
}

fn subset_position(index: usize) -> usize {
    RIGHT_HALF.iter().position(|&i| i == index).expect("index in half-face subset")
}

/// Full pipeline: align, choose the half face, project to the right side if
/// needed, normalize, then append pairwise distances.
pub fn build_feature(landmarks: &LandmarkSet, config: &GeometryConfig) -> Result<GeometricFeature> {
    let (aligned, _) = align_rotation(landmarks)?;
    let side = select_side(&aligned);
    let half = half_face(&aligned, side);
    let nose = half[subset_position(NOSE_TIP)];
    let normalized = match config.scale {
        ScaleMode::StdDev => normalize_half(&half, nose)?,
        ScaleMode::NoseEye => normalize_nose_eye(
            &half,
            nose,
            half[subset_position(NOSE_ROOT)],
            half[subset_position(RIGHT_EYE_INNER)],
        )?,
    };
    let n = normalized.len();
    let mut vector = Vec::with_capacity(feature_len(n));
    for p in &normalized {
        vector.extend_from_slice(p);
    }
    vector.extend(pairwise_distances(&normalized));
    Ok(GeometricFeature { vector, side, n })
}
