//! The four-stage training schedule, age-group bookkeeping and augmentation.
//!
//! 1. Appearance (CAN) and geometry (DGN) networks train independently.
//! 2. The integrated network (IN) trains end to end from the stage-1 trunks.
//! 3. Each age-group expert trains on its widened age slice with everything
//!    else frozen.
//! 4. The full multi-expert network trains end to end.

pub mod augment;
pub mod config;
pub mod objective;
pub mod plan;
pub mod predict;
pub mod prepare;
pub mod run;
pub mod trainer;

pub use crate::groups::{
    assign_coarse_group, assign_fine_group, expert_training_range, AgeGroupScheme, AgeRange, CoarseGroup,
};
pub use augment::{align_record, augment, flip_record, resize_record, rotate_record};
pub use config::{AugmentConfig, StageHyper, TrainConfig};
pub use plan::StagePlan;
pub use predict::{predict, ModelKind};
pub use prepare::{make_batch, prepare, prepare_one, Batch, PreparedSample};
pub use run::{checkpoint_name, run_stage, RunLayout};
pub use trainer::{EpochRecord, LossHistory, Networks, StageReport, Trainer};
