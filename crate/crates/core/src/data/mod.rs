//! Samples, manifests, subject-exclusive folds and the synthetic generator.

pub mod folds;
pub mod image;
pub mod manifest;
pub mod record;
pub mod synth;

pub use folds::{make_folds, make_folds_by_subject, FoldSplit};
pub use image::Image;
pub use manifest::{format_manifest_row, load_manifest, manifest_header, save_manifest};
pub use record::{Gender, SampleRecord};
pub use synth::{generate_synthetic, AppearanceProfile, PoseJitter, SynthConfig};
