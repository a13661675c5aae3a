//! In-memory execution of the four-stage schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SampleRecord;
use crate::error::{ensure, MgaError, Result};
use crate::groups::CoarseGroup;
use crate::losses::{CompositeLoss, LossKind};
use crate::models::{expert_prefix, CanModel, DgnModel, InModel, MgaModel};
use crate::nn::{adam_step, AdamConfig, AdamState, Ctx, ParameterStore, Tensor};
use crate::pipeline::objective::{
    can_objective, dgn_objective, expert_cache, expert_objective, in_objective, mga_objective, ExpertCache,
};
use crate::pipeline::prepare::{batch_ranges, make_batch, prepare, Batch, PreparedSample};
use crate::pipeline::{StagePlan, TrainConfig};

/// Batch size used for passes that do not update parameters.
pub const EVAL_BATCH: usize = 64;

/// Sample-weighted means of the loss terms over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub gender: f64,
    pub age: Option<f64>,
    pub group: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    /// Plan label, e.g. `stage1.can`.
    pub label: String,
    pub kind: LossKind,
    pub epochs: Vec<EpochRecord>,
}

impl LossHistory {
    pub fn first(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.total)
    }

    pub fn last(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub histories: Vec<LossHistory>,
    /// End-to-end objective after each epoch, when tracking is enabled.
    pub objective: Vec<f64>,
}

struct EpochSums {
    n: f64,
    total: f64,
    gender: f64,
    age: Option<f64>,
    group: Option<f64>,
}

impl EpochSums {
    fn new() -> Self {
        Self {
            n: 0.0,
            total: 0.0,
            gender: 0.0,
            age: None,
            group: None,
        }
    }

    fn add(&mut self, loss: &CompositeLoss, count: usize) {
        let w = count as f64;
        self.n += w;
        self.total += w * loss.total;
        self.gender += w * loss.parts.gender.unwrap_or(0.0);
        if let Some(a) = loss.parts.age {
            *self.age.get_or_insert(0.0) += w * a;
        }
        if let Some(g) = loss.parts.group {
            *self.group.get_or_insert(0.0) += w * g;
        }
    }

    fn finish(&self, epoch: usize) -> EpochRecord {
        EpochRecord {
            epoch,
            total: self.total / self.n,
            gender: self.gender / self.n,
            age: self.age.map(|a| a / self.n),
            group: self.group.map(|g| g / self.n),
        }
    }
}

/// Mixes the run seed with a plan label so every plan has its own stream.
fn plan_seed(seed: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(seed ^ 0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// The four networks over one shared parameter store.
#[derive(Debug, Clone)]
pub struct Networks {
    pub can: CanModel,
    pub dgn: DgnModel,
    pub mga: MgaModel,
}

impl Networks {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            can: CanModel::new(&cfg.arch),
            dgn: DgnModel::new(&cfg.arch),
            mga: MgaModel::new(&cfg.arch),
        }
    }

    pub fn integrated(&self) -> &InModel {
        &self.mga.inner
    }

    /// A store holding freshly initialized parameters for every network.
    pub fn init_store(&self, seed: u64) -> ParameterStore {
        let mut rng = ChaCha8Rng::seed_from_u64(plan_seed(seed, "init"));
        let mut store = ParameterStore::new();
        self.can.init(&mut store, &mut rng);
        self.dgn.init(&mut store, &mut rng);
        self.mga.inner.init_heads(&mut store, &mut rng);
        self.mga.init_experts(&mut store, &mut rng);
        store
    }
}

/// Owns the parameters and prepared training data of one run.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub nets: Networks,
    pub store: ParameterStore,
    data: Vec<PreparedSample>,
}

impl Trainer {
    /// Fresh parameters for every network.
    pub fn new(cfg: TrainConfig, train: &[SampleRecord]) -> Result<Self> {
        let nets = Networks::new(&cfg);
        let store = nets.init_store(cfg.seed);
        Self::with_store(cfg, store, train)
    }

    /// Resumes from an existing store, e.g. a loaded checkpoint.
    pub fn with_store(cfg: TrainConfig, store: ParameterStore, train: &[SampleRecord]) -> Result<Self> {
        cfg.validate()?;
        ensure!(!train.is_empty(), Data, "no training records");
        let data = prepare(train, &cfg)?;
        Ok(Self {
            nets: Networks::new(&cfg),
            cfg,
            store,
            data,
        })
    }

    pub fn data(&self) -> &[PreparedSample] {
        &self.data
    }

    pub fn into_store(self) -> ParameterStore {
        self.store
    }

    /// Runs every stage from 1 to 4.
    pub fn run_all(&mut self) -> Result<Vec<StageReport>> {
        (1..=4).map(|k| self.run_stage(k)).collect()
    }

    pub fn run_stage(&mut self, stage: usize) -> Result<StageReport> {
        self.run_stage_with(stage, |_, _| Ok(()))
    }

    /// Like [`Trainer::run_stage`], calling `after_plan` once each plan of
    /// the stage has finished.
    pub fn run_stage_with(
        &mut self,
        stage: usize,
        mut after_plan: impl FnMut(&StagePlan, &ParameterStore) -> Result<()>,
    ) -> Result<StageReport> {
        let plans = StagePlan::for_stage(stage, &self.cfg)?;
        if stage > 1 && !self.store.is_done(&format!("stage{}", stage - 1)) {
            return Err(MgaError::State(format!(
                "stage {stage} needs the stage {} checkpoint, which has not been produced",
                stage - 1
            )));
        }
        let mut report = StageReport {
            stage,
            histories: Vec::new(),
            objective: Vec::new(),
        };
        let cache = if stage == 3 { Some(self.expert_cache_all()?) } else { None };
        for plan in &plans {
            let history = self.run_plan(plan, cache.as_ref(), &mut report.objective)?;
            report.histories.push(history);
            self.store.mark_done(&plan.label());
            after_plan(plan, &self.store)?;
        }
        self.store.unfreeze_all();
        self.store.mark_done(&format!("stage{stage}"));
        Ok(report)
    }

    fn slice(&self, plan: &StagePlan) -> Result<Vec<usize>> {
        let idx: Vec<usize> = (0..self.data.len())
            .filter(|&i| plan.age_filter.map_or(true, |r| r.contains(self.data[i].age)))
            .collect();
        ensure!(
            !idx.is_empty(),
            Data,
            "{}: no training samples with age in {:?}",
            plan.label(),
            plan.age_filter
        );
        Ok(idx)
    }

    fn expert_cache_all(&self) -> Result<ExpertCache> {
        let all: Vec<&PreparedSample> = self.data.iter().collect();
        let mut parts: Vec<ExpertCache> = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for r in batch_ranges(all.len(), EVAL_BATCH) {
            let batch = make_batch(&all[r], &self.cfg.arch, true, None, &mut rng)?;
            parts.push(expert_cache(self.nets.integrated(), &self.store, &batch)?);
        }
        let cat = |f: &dyn Fn(&ExpertCache) -> &Tensor| -> Result<Tensor> {
            Tensor::from_rows(&parts.iter().flat_map(|p| (0..p.len()).map(|i| f(p).row(i).to_vec())).collect::<Vec<_>>())
        };
        Ok(ExpertCache {
            concat: cat(&|p| &p.concat)?,
            groups: cat(&|p| &p.groups)?,
            gender: cat(&|p| &p.gender)?,
            coarse: cat(&|p| &p.coarse)?,
            age: parts.iter().flat_map(|p| p.age.iter().copied()).collect(),
            ages: parts.iter().flat_map(|p| p.ages.iter().copied()).collect(),
        })
    }

    /// Stage-specific parameter hand-off before a plan starts.
    fn warm_start(&mut self, plan: &StagePlan) -> Result<()> {
        match (plan.stage, plan.expert) {
            (2, _) => warm_start_integrated(&mut self.store),
            (3, Some(g)) => warm_start_expert(&mut self.store, g),
            _ => Ok(()),
        }
    }

    fn run_plan(&mut self, plan: &StagePlan, cache: Option<&ExpertCache>, objective: &mut Vec<f64>) -> Result<LossHistory> {
        let label = plan.label();
        let idx = self.slice(plan)?;
        self.warm_start(plan)?;
        plan.apply_freeze(&mut self.store);
        let mut rng = ChaCha8Rng::seed_from_u64(plan_seed(self.cfg.seed, &label));
        let mut adam = AdamState::new(AdamConfig::new(plan.hyper.learning_rate, plan.hyper.decay));
        let expert_data = match (plan.expert, cache) {
            (Some(_), Some(c)) => Some(c.select(&idx)?),
            _ => None,
        };
        let mut history = LossHistory {
            label,
            kind: plan.kind,
            epochs: Vec::with_capacity(plan.hyper.epochs),
        };
        for epoch in 0..plan.hyper.epochs {
            // Positions into `idx`.
            let mut order: Vec<usize> = (0..idx.len()).collect();
            order.shuffle(&mut rng);
            let mut sums = EpochSums::new();
            for r in batch_ranges(order.len(), plan.hyper.batch_size) {
                let count = r.len();
                let loss = match (&expert_data, plan.expert) {
                    (Some(c), Some(group)) => {
                        let sub = c.select(&order[r])?;
                        expert_objective(self.nets.mga.expert(group), &mut self.store, &sub, &plan.weights, true)?
                    }
                    _ => {
                        let samples: Vec<&PreparedSample> = order[r].iter().map(|&p| &self.data[idx[p]]).collect();
                        let with_images = plan.kind != LossKind::Dgn;
                        let batch = make_batch(&samples, &self.cfg.arch, with_images, Some(&self.cfg.augment), &mut rng)?;
                        let mut ctx = if plan.hyper.batch_stats { Ctx::train() } else { Ctx::infer() };
                        let loss = self.objective(plan, &batch, &mut ctx, true)?;
                        self.store.apply_buffer_updates(std::mem::take(&mut ctx.updates))?;
                        loss
                    }
                };
                ensure!(loss.total.is_finite(), Numeric, "{}: loss became {}", history.label, loss.total);
                let grads = self.store.take_grads();
                adam_step(&mut self.store, &mut adam, &grads)?;
                sums.add(&loss, count);
            }
            history.epochs.push(sums.finish(epoch + 1));
            if self.cfg.track_objective {
                objective.push(self.end_to_end_objective()?);
            }
        }
        Ok(history)
    }

    fn objective(&mut self, plan: &StagePlan, batch: &Batch, ctx: &mut Ctx, backward: bool) -> Result<CompositeLoss> {
        let store = &mut self.store;
        match plan.kind {
            LossKind::Can => can_objective(&self.nets.can, store, batch, ctx, backward),
            LossKind::Dgn => dgn_objective(&self.nets.dgn, store, batch, ctx, backward),
            LossKind::Fusion => in_objective(self.nets.integrated(), store, batch, &plan.weights, ctx, backward),
            LossKind::Mga => mga_objective(&self.nets.mga, store, batch, &plan.weights, ctx, backward),
        }
    }

    /// The stage-4 objective over the unaugmented training set. Batch norm
    /// normalizes with batch statistics and its running statistics are left
    /// alone, so the value is defined from the first epoch of stage 1 on.
    pub fn end_to_end_objective(&mut self) -> Result<f64> {
        let weights = self.cfg.stage4.weights;
        let all: Vec<&PreparedSample> = self.data.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut sum = 0.0;
        for r in batch_ranges(all.len(), EVAL_BATCH) {
            let count = r.len() as f64;
            let batch = make_batch(&all[r], &self.cfg.arch, true, None, &mut rng)?;
            let loss = mga_objective(&self.nets.mga, &mut self.store, &batch, &weights, &mut Ctx::train(), false)?;
            sum += count * loss.total;
        }
        Ok(sum / all.len() as f64)
    }
}

/// A block of columns spliced into a warm-started weight matrix.
enum Block<'a> {
    Scaled(&'a str, f64),
    Zeros(usize),
}

fn splice_columns(store: &mut ParameterStore, dst: &str, blocks: &[Block]) -> Result<()> {
    let rows = store.get(dst)?.rows();
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); rows];
    for block in blocks {
        match *block {
            Block::Scaled(src, scale) => {
                let t = store.get(src)?;
                ensure!(t.rows() == rows, Dimension, "cannot splice `{src}` into `{dst}`");
                for (i, row) in out.iter_mut().enumerate() {
                    row.extend(t.row(i).iter().map(|v| v * scale));
                }
            }
            Block::Zeros(cols) => out.iter_mut().for_each(|row| row.extend(std::iter::repeat(0.0).take(cols))),
        }
    }
    let flat = out.concat();
    let target = store.get_mut(dst)?;
    ensure!(
        flat.len() == target.len(),
        Dimension,
        "warm start of `{dst}` produced {} values, expected {}",
        flat.len(),
        target.len()
    );
    target.data_mut().copy_from_slice(&flat);
    Ok(())
}

/// Starts the integrated heads from the stage-1 heads: gender logits are the
/// average of the geometry and appearance logits, and age reuses the
/// appearance regressor with zero weight on geometry features. The group
/// head keeps its random initialization.
pub fn warm_start_integrated(store: &mut ParameterStore) -> Result<()> {
    use Block::*;
    splice_columns(
        store,
        "in.head.gender.weight",
        &[Scaled("dgn.head.gender.weight", 0.5), Scaled("can.head.gender.weight", 0.5)],
    )?;
    let bias: Vec<f64> = {
        let d = store.get("dgn.head.gender.bias")?.data();
        let c = store.get("can.head.gender.bias")?.data();
        d.iter().zip(c).map(|(x, y)| 0.5 * (x + y)).collect()
    };
    store.get_mut("in.head.gender.bias")?.data_mut().copy_from_slice(&bias);
    let geometry_width = store.get("dgn.head.gender.weight")?.row_len();
    splice_columns(
        store,
        "in.head.age.weight",
        &[Zeros(geometry_width), Scaled("can.head.age.weight", 1.0)],
    )?;
    let age_bias = store.get("can.head.age.bias")?.data().to_vec();
    store.get_mut("in.head.age.bias")?.data_mut().copy_from_slice(&age_bias);
    Ok(())
}

/// Starts an expert from the integrated gender head.
pub fn warm_start_expert(store: &mut ParameterStore, group: CoarseGroup) -> Result<()> {
    let prefix = expert_prefix(group);
    for p in ["weight", "bias"] {
        let src = store.get(&format!("in.head.gender.{p}"))?.clone();
        let dst = store.get_mut(&format!("{prefix}.{p}"))?;
        dst.data_mut().copy_from_slice(src.data());
    }
    Ok(())
}
