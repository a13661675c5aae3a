//! The appearance (CAN), geometry (DGN), integrated (IN) and multi-expert
//! (MGA) networks.

pub mod blocks;
pub mod config;
pub mod fusion;
pub mod networks;
pub mod prediction;

pub use config::ArchConfig;
pub use fusion::{fuse, fuse_experts, fuse_experts_backward};
pub use networks::{
    expert_prefix, CanModel, CanPass, DgnModel, DgnPass, InGrads, InModel, InPass, MgaModel, MgaPass,
    CAN_TRUNK_PREFIX, DGN_TRUNK_PREFIX, EXPERT_PREFIX, IN_HEAD_PREFIX,
};
pub use prediction::Prediction;
