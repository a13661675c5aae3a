//! Evaluation metrics and class activation maps.

pub mod cam;
pub mod metrics;

pub use cam::{compute_cam, export_cam, weighted_map_sum, Cam, CamHead, CamMap};
pub use metrics::{compute_metrics, EvalReport, SliceAccuracy, Truth};
