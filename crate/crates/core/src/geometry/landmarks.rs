use std::fmt::Write as _;
use std::path::Path;

use crate::error::{ensure, MgaError, Result, RowError};

pub const NUM_LANDMARKS: usize = 68;

/// Nose tip, the basis point for normalization (1-based).
pub const NOSE_TIP: usize = 31;
/// Top of the nose ridge, used for the optional nose-to-eye scale (1-based).
pub const NOSE_ROOT: usize = 28;
/// Inner corner of the right eye (1-based); its mirror partner is 43.
pub const RIGHT_EYE_INNER: usize = 40;

pub const RIGHT_EYE: std::ops::RangeInclusive<usize> = 37..=42;
pub const LEFT_EYE: std::ops::RangeInclusive<usize> = 43..=48;

/// Horizontal mirror partner of each landmark in the 68-point scheme
/// (1-based; entry `i - 1` is the partner of point `i`).
pub const MIRROR: [usize; NUM_LANDMARKS] = [
    // jaw 1..17
    17, 16, 15, 14, 13, 12, 11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1,
    // brows 18..27
    27, 26, 25, 24, 23, 22, 21, 20, 19, 18,
    // nose ridge 28..31
    28, 29, 30, 31,
    // nose base 32..36
    36, 35, 34, 33, 32,
    // right eye 37..42, left eye 43..48
    46, 45, 44, 43, 48, 47, 40, 39, 38, 37, 42, 41,
    // outer lip 49..60
    55, 54, 53, 52, 51, 50, 49, 60, 59, 58, 57, 56,
    // inner lip 61..68
    65, 64, 63, 62, 61, 68, 67, 66,
];

/// Right half-face subset (1-based), midline points included. Points on the
/// left half are projected onto these positions through [`MIRROR`].
///
/// | group            | points                     |
/// |------------------|----------------------------|
/// | jaw + chin       | 1-9                        |
/// | right brow       | 18-22                      |
/// | nose ridge       | 28-31                      |
/// | nose base        | 32, 33, 34                 |
/// | right eye        | 37-42                      |
/// | outer lip        | 49, 50, 51, 52, 58, 59, 60 |
/// | inner lip        | 61, 62, 63, 67, 68         |
pub const RIGHT_HALF: [usize; 39] = [
    1, 2, 3, 4, 5, 6, 7, 8, 9, //
    18, 19, 20, 21, 22, //
    28, 29, 30, 31, //
    32, 33, 34, //
    37, 38, 39, 40, 41, 42, //
    49, 50, 51, 52, 58, 59, 60, //
    61, 62, 63, 67, 68,
];

pub type Point = [f64; 2];

/// 68 facial landmarks in image pixel coordinates, 1-based indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        ensure!(
            points.len() == NUM_LANDMARKS,
            Data,
            "expected {NUM_LANDMARKS} landmarks, got {}",
            points.len()
        );
        ensure!(
            points.iter().all(|p| p[0].is_finite() && p[1].is_finite()),
            Data,
            "landmark coordinates must be finite"
        );
        Ok(Self { points })
    }

    /// Builds from a flat `x1, y1, ..., x68, y68` slice.
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        ensure!(
            values.len() == 2 * NUM_LANDMARKS,
            Data,
            "expected {} coordinates, got {}",
            2 * NUM_LANDMARKS,
            values.len()
        );
        Self::new(values.chunks(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p[0], p[1]]).collect()
    }

    /// Point by 1-based index.
    pub fn point(&self, index: usize) -> Point {
        self.points[index - 1]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn centroid(&self, indices: impl IntoIterator<Item = usize>) -> Point {
        let mut sum = [0.0, 0.0];
        let mut n = 0.0;
        for i in indices {
            let p = self.point(i);
            sum[0] += p[0];
            sum[1] += p[1];
            n += 1.0;
        }
        [sum[0] / n, sum[1] / n]
    }

    pub fn right_eye_center(&self) -> Point {
        self.centroid(RIGHT_EYE)
    }

    pub fn left_eye_center(&self) -> Point {
        self.centroid(LEFT_EYE)
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Self {
        Self {
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        self.map(|p| [p[0] + dx, p[1] + dy])
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|p| [p[0] * s, p[1] * s])
    }

    /// Rigid rotation by `angle` radians about `center`.
    pub fn rotate(&self, angle: f64, center: Point) -> Self {
        let (s, c) = angle.sin_cos();
        self.map(|p| {
            let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
            [center[0] + c * dx - s * dy, center[1] + s * dx + c * dy]
        })
    }

    /// Horizontal mirror about the vertical line `x = axis`, with left/right
    /// partners swapped so the result is a valid 68-point labelling of the
    /// mirrored face.
    pub fn mirror_about(&self, axis: f64) -> Self {
        Self {
            points: (1..=NUM_LANDMARKS)
                .map(|i| {
                    let p = self.point(MIRROR[i - 1]);
                    [2.0 * axis - p[0], p[1]]
                })
                .collect(),
        }
    }

    pub fn mirror(&self) -> Self {
        self.mirror_about(0.0)
    }
}

/// One landmark-file record.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkRecord {
    pub id: String,
    pub landmarks: LandmarkSet,
}

/// Header of the landmark file: `id,x1,y1,...,x68,y68`.
pub fn landmark_header() -> String {
    let mut h = String::from("id");
    for i in 1..=NUM_LANDMARKS {
        write!(h, ",x{i},y{i}").unwrap();
    }
    h
}

pub fn format_landmark_row(id: &str, landmarks: &LandmarkSet) -> String {
    let mut row = id.to_owned();
    for v in landmarks.to_flat() {
        write!(row, ",{v}").unwrap();
    }
    row
}

pub fn parse_landmark_file(text: &str, path: &Path) -> Result<Vec<LandmarkRecord>> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || (line_no == 1 && line.starts_with("id,")) {
            continue;
        }
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or_default().trim().to_owned();
        let values: std::result::Result<Vec<f64>, _> = fields.map(|f| f.trim().parse::<f64>()).collect();
        let parsed = values
            .map_err(|e| MgaError::Data(format!("bad coordinate: {e}")))
            .and_then(|v| LandmarkSet::from_flat(&v));
        match parsed {
            Ok(landmarks) if !id.is_empty() => records.push(LandmarkRecord { id, landmarks }),
            Ok(_) => errors.push(RowError {
                line: line_no,
                message: "missing image identifier".into(),
            }),
            Err(e) => errors.push(RowError {
                line: line_no,
                message: e.to_string(),
            }),
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(MgaError::Load {
            path: path.to_path_buf(),
            errors,
        })
    }
}

pub fn read_landmark_file(path: &Path) -> Result<Vec<LandmarkRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| MgaError::io(path, e))?;
    parse_landmark_file(&text, path)
}

pub fn write_landmark_file(path: &Path, records: &[LandmarkRecord]) -> Result<()> {
    let mut out = landmark_header();
    out.push('\n');
    for r in records {
        out.push_str(&format_landmark_row(&r.id, &r.landmarks));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| MgaError::io(path, e))
}
