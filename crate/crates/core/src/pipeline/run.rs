//! Stage execution against a run directory: prerequisite checkpoints are
//! loaded from it and results written back.
//!
//! ```text
//! {dir}/train.toml           run configuration
//! {dir}/arch.toml            architecture
//! {dir}/stage1.ckpt          appearance + geometry networks
//! {dir}/stage2.ckpt          integrated network
//! {dir}/stage3.young.ckpt    one per expert
//! {dir}/stage4.ckpt          multi-expert network
//! {dir}/stage{k}.loss.csv    per-epoch losses
//! {dir}/stage{k}.report.json
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::SampleRecord;
use crate::error::{MgaError, Result};
use crate::groups::CoarseGroup;
use crate::models::EXPERT_PREFIX;
use crate::nn::{checkpoint, ParameterStore};
use crate::pipeline::{StageReport, TrainConfig, Trainer};

/// `stage{k}.ckpt`, or `stage3.{expert}.ckpt`.
pub fn checkpoint_name(stage: usize, expert: Option<CoarseGroup>) -> String {
    match expert {
        Some(g) => format!("stage{stage}.{g}.ckpt"),
        None => format!("stage{stage}.ckpt"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    pub dir: PathBuf,
}

impl RunLayout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn checkpoint(&self, stage: usize, expert: Option<CoarseGroup>) -> PathBuf {
        self.dir.join(checkpoint_name(stage, expert))
    }

    pub fn loss_log(&self, stage: usize) -> PathBuf {
        self.dir.join(format!("stage{stage}.loss.csv"))
    }

    pub fn report(&self, stage: usize) -> PathBuf {
        self.dir.join(format!("stage{stage}.report.json"))
    }

    pub fn train_config(&self) -> PathBuf {
        self.dir.join("train.toml")
    }

    pub fn arch_config(&self) -> PathBuf {
        self.dir.join("arch.toml")
    }

    fn require(&self, stage: usize, expert: Option<CoarseGroup>) -> Result<ParameterStore> {
        let path = self.checkpoint(stage, expert);
        if !path.exists() {
            return Err(MgaError::State(format!(
                "missing prerequisite checkpoint {}; run stage {stage} first",
                path.display()
            )));
        }
        checkpoint::load(&path)
    }

    /// The parameter state that stage `stage` starts from.
    pub fn load_prerequisite(&self, stage: usize) -> Result<Option<ParameterStore>> {
        Ok(match stage {
            1 => None,
            2 | 3 => Some(self.require(stage - 1, None)?),
            4 => {
                let mut base = self.require(3, Some(CoarseGroup::Young))?;
                for g in [CoarseGroup::Adult, CoarseGroup::Elder] {
                    let other = self.require(3, Some(g))?;
                    base.merge_prefix(&other, &format!("{EXPERT_PREFIX}.{g}"));
                    base.mark_done(&format!("stage3.{g}"));
                }
                base.mark_done("stage3");
                Some(base)
            }
            _ => return Err(MgaError::Config(format!("stage must be 1-4, got {stage}"))),
        })
    }

    /// Loads the checkpoint that completes `stage`. Stage 3 merges the three
    /// expert checkpoints.
    pub fn load_stage(&self, stage: usize) -> Result<ParameterStore> {
        match stage {
            3 => Ok(self.load_prerequisite(4)?.expect("stage 4 has a prerequisite")),
            k => self.require(k, None),
        }
    }
}

pub fn format_loss_log(report: &StageReport) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("label,epoch,total,gender,age,group\n");
    for h in &report.histories {
        for e in &h.epochs {
            writeln!(out, "{},{},{},{},{},{}", h.label, e.epoch, e.total, e.gender, opt(e.age), opt(e.group)).unwrap();
        }
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| MgaError::io(path, e))
}

/// Runs one stage on `train`, reading prerequisites from and writing
/// checkpoints, loss logs and configs to `layout`.
pub fn run_stage(stage: usize, cfg: &TrainConfig, train: &[SampleRecord], layout: &RunLayout) -> Result<StageReport> {
    let start = layout.load_prerequisite(stage)?;
    std::fs::create_dir_all(&layout.dir).map_err(|e| MgaError::io(&layout.dir, e))?;
    write(&layout.train_config(), &cfg.to_toml())?;
    cfg.arch.save(&layout.arch_config())?;
    let mut trainer = match start {
        None => Trainer::new(cfg.clone(), train)?,
        Some(store) => Trainer::with_store(cfg.clone(), store, train)?,
    };
    let report = trainer.run_stage_with(stage, |plan, store| match plan.expert {
        Some(g) => checkpoint::save(store, &layout.checkpoint(stage, Some(g))),
        None => Ok(()),
    })?;
    if stage != 3 {
        checkpoint::save(&trainer.store, &layout.checkpoint(stage, None))?;
    }
    write(&layout.loss_log(stage), &format_loss_log(&report))?;
    write(
        &layout.report(stage),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    Ok(report)
}
