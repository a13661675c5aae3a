//! Train the full schedule on one fold and evaluate every model variant on
//! the held-out fold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{make_folds, SampleRecord};
use crate::error::Result;
use crate::eval::{compute_metrics, EvalReport, Truth};
use crate::pipeline::{predict, prepare, ModelKind, StageReport, TrainConfig, Trainer};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub fold: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Keyed by [`ModelKind::name`].
    pub reports: BTreeMap<String, EvalReport>,
    pub stages: Vec<StageReport>,
}

impl Comparison {
    pub fn report(&self, kind: ModelKind) -> &EvalReport {
        &self.reports[kind.name()]
    }
}

/// Splits `records` into subject-exclusive folds, trains stages 1-4 on all
/// folds but `fold`, and evaluates each model on `fold`. Each model is
/// evaluated right after the stage that completes it.
pub fn compare_models(records: &[SampleRecord], cfg: &TrainConfig, fold: usize) -> Result<Comparison> {
    let split = make_folds(records, cfg.folds, cfg.seed)?;
    let (train_idx, test_idx) = split.train_test(fold)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    let (train, test) = (pick(&train_idx), pick(&test_idx));
    let test_prepared = prepare(&test, cfg)?;
    let truths: Vec<Truth> = test
        .iter()
        .map(|r| Truth {
            age: r.age,
            gender: r.gender,
        })
        .collect();

    let mut trainer = Trainer::new(cfg.clone(), &train)?;
    let mut reports = BTreeMap::new();
    let mut stages = Vec::new();
    for stage in 1..=4 {
        stages.push(trainer.run_stage(stage)?);
        for kind in ModelKind::ALL.into_iter().filter(|k| k.required_stage() == stage) {
            let preds = predict(kind, cfg, &trainer.store, &test_prepared)?;
            reports.insert(kind.name().to_owned(), compute_metrics(&preds, &truths, &cfg.groups)?);
        }
    }
    Ok(Comparison {
        fold,
        train_samples: train.len(),
        test_samples: test.len(),
        reports,
        stages,
    })
}
