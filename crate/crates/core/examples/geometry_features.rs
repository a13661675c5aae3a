//! Builds the half-face geometric feature for a template face, then shows
//! that moving, scaling, rotating or mirroring the landmarks leaves it
//! unchanged.
//!
//! cargo run --example geometry_features

use mga::geometry::{build_feature, frontal_template, GeometryConfig, ScaleMode, FEATURE_LEN};

fn main() -> mga::Result<()> {
    let face = frontal_template().scale(80.0).translate(120.0, 90.0);
    let cfg = GeometryConfig::default();
    let f = build_feature(&face, &cfg)?;
    println!(
        "{} half-face points on the {:?} side, feature length {} (expected {FEATURE_LEN})",
        f.n,
        f.side,
        f.vector.len()
    );
    println!("first coordinates {:?}", &f.coordinates()[..6]);
    println!("first distances   {:?}", &f.distances()[..4]);

    let center = face.centroid(1..=68);
    for (name, moved) in [
        ("translated", face.translate(-35.0, 12.5)),
        ("scaled", face.scale(2.7)),
        ("rotated", face.rotate(0.4, center)),
        ("mirrored", face.mirror()),
    ] {
        let g = build_feature(&moved, &cfg)?;
        let diff = f.vector.iter().zip(&g.vector).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{name:<10} side {:?}, max difference {diff:.2e}", g.side);
    }

    let nose_eye = build_feature(&face, &GeometryConfig { scale: ScaleMode::NoseEye })?;
    println!("nose-eye scaling, first coordinates {:?}", &nose_eye.coordinates()[..6]);
    Ok(())
}
