//! Landmark-derived geometric features for the geometry network.
//!
//! A 68-point landmark set is rotated so the eyes are level, the less
//! foreshortened half face is kept (the left half is reflected onto the
//! right-half ordering), coordinates are centered on the nose tip and scaled
//! per axis, and all pairwise distances are appended.

pub mod features;
pub mod landmarks;
pub mod template;

pub use features::{
    align_rotation, build_feature, feature_len, half_face, normalize_half, pairwise_distances, project_to_right,
    select_side, GeometricFeature, GeometryConfig, ScaleMode, Side, FEATURE_LEN,
};
pub use landmarks::{LandmarkRecord, LandmarkSet, Point, MIRROR, NUM_LANDMARKS, RIGHT_HALF};
pub use template::frontal_template;
