use serde::{Deserialize, Serialize};

use crate::error::{MgaError, Result};
use crate::groups::{AgeRange, CoarseGroup};
use crate::losses::{LossKind, LossWeights};
use crate::models::{expert_prefix, CAN_TRUNK_PREFIX, DGN_TRUNK_PREFIX, EXPERT_PREFIX, IN_HEAD_PREFIX};
use crate::nn::ParameterStore;
use crate::pipeline::{StageHyper, TrainConfig};

/// One training run of a schedule stage: what to optimize, on which data,
/// with which parameters free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage: usize,
    /// Set for the three stage-3 sub-trainings.
    pub expert: Option<CoarseGroup>,
    pub kind: LossKind,
    pub weights: LossWeights,
    pub hyper: StageHyper,
    /// Parameter-name prefixes left trainable; all others are frozen.
    pub trainable: Vec<String>,
    /// Only samples whose true age falls in this range are used.
    pub age_filter: Option<AgeRange>,
}

impl StagePlan {
    /// Stage 1 yields the appearance and geometry plans, stage 3 one plan per
    /// expert, stages 2 and 4 a single plan.
    pub fn for_stage(stage: usize, cfg: &TrainConfig) -> Result<Vec<StagePlan>> {
        let hyper = cfg.stage(stage)?.clone();
        let plan = |kind: LossKind, trainable: &[&str], expert: Option<CoarseGroup>| StagePlan {
            stage,
            expert,
            kind,
            weights: hyper.weights,
            hyper: hyper.clone(),
            trainable: trainable.iter().map(|s| s.to_string()).collect(),
            age_filter: expert.map(|g| cfg.groups.expert_range(g)),
        };
        Ok(match stage {
            1 => vec![
                plan(LossKind::Can, &["can."], None),
                plan(LossKind::Dgn, &["dgn."], None),
            ],
            2 => vec![plan(
                LossKind::Fusion,
                &[CAN_TRUNK_PREFIX, DGN_TRUNK_PREFIX, IN_HEAD_PREFIX],
                None,
            )],
            3 => CoarseGroup::ALL
                .iter()
                .map(|&g| plan(LossKind::Fusion, &[&expert_prefix(g)], Some(g)))
                .collect(),
            4 => vec![plan(
                LossKind::Mga,
                &[CAN_TRUNK_PREFIX, DGN_TRUNK_PREFIX, IN_HEAD_PREFIX, EXPERT_PREFIX],
                None,
            )],
            _ => return Err(MgaError::Config(format!("stage must be 1-4, got {stage}"))),
        })
    }

    /// `stage1.can`, `stage1.dgn`, `stage2`, `stage3.young`, ..., `stage4`.
    pub fn label(&self) -> String {
        match (self.stage, self.expert, self.kind) {
            (3, Some(g), _) => format!("stage3.{g}"),
            (1, _, LossKind::Can) => "stage1.can".into(),
            (1, _, _) => "stage1.dgn".into(),
            (k, _, _) => format!("stage{k}"),
        }
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.trainable.iter().any(|p| name.starts_with(p.as_str()))
    }

    /// Trainable names of `store` this plan freezes.
    pub fn frozen_names(&self, store: &ParameterStore) -> Vec<String> {
        store
            .trainable_names()
            .filter(|n| !self.is_trainable(n))
            .map(str::to_owned)
            .collect()
    }

    pub fn apply_freeze(&self, store: &mut ParameterStore) {
        store.unfreeze_all();
        store.freeze_all_except(|n| self.is_trainable(n));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_weights_follow_the_schedule() {
        let cfg = TrainConfig::reference();
        let s2 = &StagePlan::for_stage(2, &cfg).unwrap()[0];
        assert_eq!((s2.weights.alpha1, s2.weights.beta1), (1.0, 1.0));
        let s3 = StagePlan::for_stage(3, &cfg).unwrap();
        assert_eq!(s3.len(), 3);
        for p in &s3 {
            assert_eq!((p.weights.alpha1, p.weights.beta1), (1e-4, 1e-4));
            assert_eq!(p.trainable, vec![expert_prefix(p.expert.unwrap())]);
        }
        assert_eq!(s3[1].age_filter, Some(AgeRange { lo: 15.0, hi: 55.0 }));
        let s4 = &StagePlan::for_stage(4, &cfg).unwrap()[0];
        assert_eq!((s4.weights.lambda1, s4.weights.lambda2), (0.1, 0.1));
        assert!(StagePlan::for_stage(5, &cfg).is_err());
        let labels: Vec<String> = (1..=4)
            .flat_map(|k| StagePlan::for_stage(k, &cfg).unwrap())
            .map(|p| p.label())
            .collect();
        assert_eq!(
            labels,
            ["stage1.can", "stage1.dgn", "stage2", "stage3.young", "stage3.adult", "stage3.elder", "stage4"]
        );
    }
}
