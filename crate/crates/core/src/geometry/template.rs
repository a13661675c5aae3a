//! A symmetric frontal 68-point face in face units (inter-ocular distance
//! close to 1, nose bridge on x = 0, y pointing down).

use crate::geometry::landmarks::{LandmarkSet, Point, MIRROR, NUM_LANDMARKS, RIGHT_HALF};

fn right_half_points() -> [Point; 39] {
    let jaw = |i: usize| -> Point {
        if i == 9 {
            return [0.0, 0.95];
        }
        let phi = std::f64::consts::PI * (i - 1) as f64 / 16.0;
        [-0.95 * phi.cos(), -0.1 + 1.05 * phi.sin()]
    };
    [
        jaw(1),
        jaw(2),
        jaw(3),
        jaw(4),
        jaw(5),
        jaw(6),
        jaw(7),
        jaw(8),
        jaw(9),
        [-0.85, -0.5],
        [-0.7, -0.58],
        [-0.55, -0.6],
        [-0.38, -0.58],
        [-0.2, -0.52],
        [0.0, -0.32],
        [0.0, -0.18],
        [0.0, -0.04],
        [0.0, 0.1],
        [-0.2, 0.25],
        [-0.1, 0.28],
        [0.0, 0.3],
        [-0.72, -0.3],
        [-0.6, -0.37],
        [-0.42, -0.37],
        [-0.28, -0.3],
        [-0.42, -0.24],
        [-0.6, -0.24],
        [-0.38, 0.62],
        [-0.24, 0.55],
        [-0.1, 0.52],
        [0.0, 0.54],
        [0.0, 0.78],
        [-0.12, 0.76],
        [-0.26, 0.71],
        [-0.3, 0.63],
        [-0.1, 0.6],
        [0.0, 0.61],
        [0.0, 0.68],
        [-0.1, 0.67],
    ]
}

/// Mirror-symmetric frontal template.
pub fn frontal_template() -> LandmarkSet {
    let mut pts = [[f64::NAN, f64::NAN]; NUM_LANDMARKS];
    for (&i, p) in RIGHT_HALF.iter().zip(right_half_points()) {
        pts[i - 1] = p;
        let m = MIRROR[i - 1];
        if m != i {
            pts[m - 1] = [-p[0], p[1]];
        }
    }
    LandmarkSet::new(pts.to_vec()).expect("template covers all 68 points")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_is_mirror_symmetric() {
        let t = frontal_template();
        assert_eq!(t.mirror(), t);
    }
}
