use rand::Rng;

use crate::error::{ensure, Result};
use crate::groups::CoarseGroup;
use crate::models::blocks::{AgeHead, CanTrunk, CanTrunkOutput, ClassHead, ClassHeadCache, DgnTrunk, DgnTrunkCache};
use crate::models::fusion::{fuse_experts, fuse_experts_backward};
use crate::models::{ArchConfig, Prediction};
use crate::nn::layers::DenseCache;
use crate::nn::{Ctx, ParameterStore, Tensor};

pub const CAN_TRUNK_PREFIX: &str = "can.block";
pub const DGN_TRUNK_PREFIX: &str = "dgn.hidden";
pub const IN_HEAD_PREFIX: &str = "in.head";
pub const EXPERT_PREFIX: &str = "mga.expert";

pub fn expert_prefix(group: CoarseGroup) -> String {
    format!("{EXPERT_PREFIX}.{}", group.name())
}

fn add_into(acc: &mut Option<Tensor>, g: Tensor) -> Result<()> {
    *acc = Some(match acc.take() {
        Some(a) => a.add(&g)?,
        None => g,
    });
    Ok(())
}

/// Appearance network: conv trunk with gender (softmax) and age (linear) heads.
#[derive(Debug, Clone)]
pub struct CanModel {
    pub trunk: CanTrunk,
    pub gender: ClassHead,
    pub age: AgeHead,
}

#[derive(Debug)]
pub struct CanPass {
    pub gender: Tensor,
    pub age: Vec<f64>,
    pub trunk: CanTrunkOutput,
    gender_cache: ClassHeadCache,
    age_cache: DenseCache,
}

impl CanModel {
    pub fn new(cfg: &ArchConfig) -> Self {
        let trunk = CanTrunk::new(cfg);
        let f = trunk.features;
        Self {
            trunk,
            gender: ClassHead::new("can.head.gender", f, 2),
            age: AgeHead::new("can.head.age", f, cfg),
        }
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        self.trunk.init(store, rng);
        self.gender.init(store, rng);
        self.age.init(store, rng);
    }

    pub fn forward(&self, store: &ParameterStore, images: &Tensor, ctx: &mut Ctx) -> Result<CanPass> {
        let trunk = self.trunk.forward(store, images, ctx)?;
        let (gender, gender_cache) = self.gender.forward(store, &trunk.features)?;
        let (age, age_cache) = self.age.forward(store, &trunk.features)?;
        Ok(CanPass {
            gender,
            age,
            trunk,
            gender_cache,
            age_cache,
        })
    }

    pub fn backward(&self, store: &mut ParameterStore, pass: &CanPass, d_gender: &Tensor, d_age: &[f64]) -> Result<()> {
        let g1 = self.gender.backward(store, &pass.gender_cache, d_gender)?;
        let g2 = self.age.backward(store, &pass.age_cache, d_age)?;
        self.trunk.backward(store, &pass.trunk.cache, &g1.add(&g2)?)
    }

    pub fn predict(&self, store: &ParameterStore, images: &Tensor) -> Result<Vec<Prediction>> {
        let pass = self.forward(store, images, &mut Ctx::infer())?;
        Ok((0..pass.age.len())
            .map(|i| Prediction {
                age: Some(pass.age[i]),
                ..Prediction::gender_only(pass.gender.row(i))
            })
            .collect())
    }
}

/// Geometry network: two hidden layers with gender and fine age-group heads.
#[derive(Debug, Clone)]
pub struct DgnModel {
    pub trunk: DgnTrunk,
    pub gender: ClassHead,
    pub group: ClassHead,
}

#[derive(Debug)]
pub struct DgnPass {
    pub gender: Tensor,
    pub fine_groups: Tensor,
    /// Second hidden layer activations.
    pub hidden: Tensor,
    trunk_cache: DgnTrunkCache,
    gender_cache: ClassHeadCache,
    group_cache: ClassHeadCache,
}

impl DgnModel {
    pub fn new(cfg: &ArchConfig) -> Self {
        let trunk = DgnTrunk::new(cfg);
        let f = trunk.features;
        Self {
            trunk,
            gender: ClassHead::new("dgn.head.gender", f, 2),
            group: ClassHead::new("dgn.head.group", f, cfg.fine_groups),
        }
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        self.trunk.init(store, rng);
        self.gender.init(store, rng);
        self.group.init(store, rng);
    }

    pub fn forward(&self, store: &ParameterStore, features: &Tensor, ctx: &mut Ctx) -> Result<DgnPass> {
        let (hidden, trunk_cache) = self.trunk.forward(store, features, ctx)?;
        let (gender, gender_cache) = self.gender.forward(store, &hidden)?;
        let (fine_groups, group_cache) = self.group.forward(store, &hidden)?;
        Ok(DgnPass {
            gender,
            fine_groups,
            hidden,
            trunk_cache,
            gender_cache,
            group_cache,
        })
    }

    pub fn backward(
        &self,
        store: &mut ParameterStore,
        pass: &DgnPass,
        d_gender: &Tensor,
        d_groups: &Tensor,
    ) -> Result<()> {
        let g1 = self.gender.backward(store, &pass.gender_cache, d_gender)?;
        let g2 = self.group.backward(store, &pass.group_cache, d_groups)?;
        self.trunk.backward(store, &pass.trunk_cache, &g1.add(&g2)?)
    }

    pub fn predict(&self, store: &ParameterStore, features: &Tensor) -> Result<Vec<Prediction>> {
        let pass = self.forward(store, features, &mut Ctx::infer())?;
        Ok((0..pass.gender.rows())
            .map(|i| Prediction {
                fine_groups: Some(pass.fine_groups.row(i).to_vec()),
                ..Prediction::gender_only(pass.gender.row(i))
            })
            .collect())
    }
}

/// Integrated network: geometry hidden-2 features and appearance GAP features
/// concatenated (geometry first) into gender, age and coarse-group heads.
#[derive(Debug, Clone)]
pub struct InModel {
    pub can: CanTrunk,
    pub dgn: DgnTrunk,
    pub gender: ClassHead,
    pub age: AgeHead,
    pub group: ClassHead,
}

#[derive(Debug)]
pub struct InPass {
    pub gender: Tensor,
    pub age: Vec<f64>,
    pub groups: Tensor,
    /// `f = {f_dgn, f_can}`, `[N, N_D + N_C]`.
    pub concat: Tensor,
    pub can: CanTrunkOutput,
    dgn_cache: DgnTrunkCache,
    gender_cache: ClassHeadCache,
    age_cache: DenseCache,
    group_cache: ClassHeadCache,
}

/// Upstream gradients for an [`InPass`]; absent terms contribute nothing.
#[derive(Debug, Default)]
pub struct InGrads {
    pub gender: Option<Tensor>,
    pub age: Option<Vec<f64>>,
    pub groups: Option<Tensor>,
    /// Extra gradient arriving directly at the concatenated vector.
    pub concat: Option<Tensor>,
}

impl InModel {
    pub fn new(cfg: &ArchConfig) -> Self {
        let can = CanTrunk::new(cfg);
        let dgn = DgnTrunk::new(cfg);
        let f = can.features + dgn.features;
        Self {
            can,
            dgn,
            gender: ClassHead::new("in.head.gender", f, 2),
            age: AgeHead::new("in.head.age", f, cfg),
            group: ClassHead::new("in.head.group", f, cfg.coarse_groups),
        }
    }

    pub fn concat_len(&self) -> usize {
        self.can.features + self.dgn.features
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        self.can.init(store, rng);
        self.dgn.init(store, rng);
        self.init_heads(store, rng);
    }

    pub fn init_heads(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        self.gender.init(store, rng);
        self.age.init(store, rng);
        self.group.init(store, rng);
    }

    /// Runs both trunks and concatenates their features.
    pub fn trunk_forward(
        &self,
        store: &ParameterStore,
        images: &Tensor,
        features: &Tensor,
        ctx: &mut Ctx,
    ) -> Result<(Tensor, CanTrunkOutput, DgnTrunkCache)> {
        ensure!(
            images.rows() == features.rows(),
            Dimension,
            "{} images but {} geometric features",
            images.rows(),
            features.rows()
        );
        let (hidden, dgn_cache) = self.dgn.forward(store, features, ctx)?;
        let can = self.can.forward(store, images, ctx)?;
        let concat = Tensor::concat_cols(&hidden, &can.features)?;
        Ok((concat, can, dgn_cache))
    }

    pub fn forward(&self, store: &ParameterStore, images: &Tensor, features: &Tensor, ctx: &mut Ctx) -> Result<InPass> {
        let (concat, can, dgn_cache) = self.trunk_forward(store, images, features, ctx)?;
        let (gender, gender_cache) = self.gender.forward(store, &concat)?;
        let (age, age_cache) = self.age.forward(store, &concat)?;
        let (groups, group_cache) = self.group.forward(store, &concat)?;
        Ok(InPass {
            gender,
            age,
            groups,
            concat,
            can,
            dgn_cache,
            gender_cache,
            age_cache,
            group_cache,
        })
    }

    /// Backpropagates through the heads, and into both trunks when
    /// `through_trunks` is set.
    pub fn backward(&self, store: &mut ParameterStore, pass: &InPass, grads: InGrads, through_trunks: bool) -> Result<()> {
        let mut d_concat = grads.concat;
        if let Some(g) = &grads.gender {
            add_into(&mut d_concat, self.gender.backward(store, &pass.gender_cache, g)?)?;
        }
        if let Some(g) = &grads.age {
            add_into(&mut d_concat, self.age.backward(store, &pass.age_cache, g)?)?;
        }
        if let Some(g) = &grads.groups {
            add_into(&mut d_concat, self.group.backward(store, &pass.group_cache, g)?)?;
        }
        let Some(d_concat) = d_concat else {
            return Ok(());
        };
        if through_trunks {
            let (d_dgn, d_can) = d_concat.split_cols(self.dgn.features)?;
            self.dgn.backward(store, &pass.dgn_cache, &d_dgn)?;
            self.can.backward(store, &pass.can.cache, &d_can)?;
        }
        Ok(())
    }

    pub fn predict(&self, store: &ParameterStore, images: &Tensor, features: &Tensor) -> Result<Vec<Prediction>> {
        let pass = self.forward(store, images, features, &mut Ctx::infer())?;
        Ok((0..pass.age.len())
            .map(|i| Prediction {
                age: Some(pass.age[i]),
                groups: Some(row3(pass.groups.row(i))),
                ..Prediction::gender_only(pass.gender.row(i))
            })
            .collect())
    }
}

fn row3(r: &[f64]) -> [f64; 3] {
    [r[0], r[1], r[2]]
}

/// The integrated network plus three age-group expert gender heads whose
/// outputs are mixed by the coarse-group probabilities.
#[derive(Debug, Clone)]
pub struct MgaModel {
    pub inner: InModel,
    pub experts: [ClassHead; 3],
}

#[derive(Debug)]
pub struct MgaPass {
    pub inner: InPass,
    /// Per-expert gender probabilities, indexed like [`CoarseGroup::ALL`].
    pub experts: [Tensor; 3],
    pub fused: Tensor,
    expert_caches: Vec<ClassHeadCache>,
}

impl MgaModel {
    pub fn new(cfg: &ArchConfig) -> Self {
        let inner = InModel::new(cfg);
        let f = inner.concat_len();
        let experts = CoarseGroup::ALL.map(|g| ClassHead::new(&expert_prefix(g), f, 2));
        Self { inner, experts }
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        self.inner.init(store, rng);
        self.init_experts(store, rng);
    }

    pub fn init_experts(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        for e in &self.experts {
            e.init(store, rng);
        }
    }

    pub fn expert(&self, group: CoarseGroup) -> &ClassHead {
        &self.experts[group.index()]
    }

    pub fn forward(&self, store: &ParameterStore, images: &Tensor, features: &Tensor, ctx: &mut Ctx) -> Result<MgaPass> {
        let inner = self.inner.forward(store, images, features, ctx)?;
        let mut outs = Vec::with_capacity(3);
        let mut expert_caches = Vec::with_capacity(3);
        for e in &self.experts {
            let (p, c) = e.forward(store, &inner.concat)?;
            outs.push(p);
            expert_caches.push(c);
        }
        let experts: [Tensor; 3] = outs.try_into().expect("three experts");
        let fused = fuse_experts(&inner.groups, &experts)?;
        Ok(MgaPass {
            inner,
            experts,
            fused,
            expert_caches,
        })
    }

    /// Backpropagates gradients of the fused gender probabilities, the age
    /// estimate and the group probabilities.
    pub fn backward(
        &self,
        store: &mut ParameterStore,
        pass: &MgaPass,
        d_fused: &Tensor,
        d_age: Option<Vec<f64>>,
        d_groups: Option<Tensor>,
        through_trunks: bool,
    ) -> Result<()> {
        let (d_gate, d_experts) = fuse_experts_backward(&pass.inner.groups, &pass.experts, d_fused)?;
        let mut d_concat = None;
        for ((e, c), g) in self.experts.iter().zip(&pass.expert_caches).zip(&d_experts) {
            add_into(&mut d_concat, e.backward(store, c, g)?)?;
        }
        let d_groups = match d_groups {
            Some(g) => g.add(&d_gate)?,
            None => d_gate,
        };
        self.inner.backward(
            store,
            &pass.inner,
            InGrads {
                gender: None,
                age: d_age,
                groups: Some(d_groups),
                concat: d_concat,
            },
            through_trunks,
        )
    }

    pub fn predict(&self, store: &ParameterStore, images: &Tensor, features: &Tensor) -> Result<Vec<Prediction>> {
        let pass = self.forward(store, images, features, &mut Ctx::infer())?;
        Ok(predictions_from_pass(&pass))
    }
}

pub fn predictions_from_pass(pass: &MgaPass) -> Vec<Prediction> {
    (0..pass.fused.rows())
        .map(|i| {
            let e = |k: usize| [pass.experts[k].row(i)[0], pass.experts[k].row(i)[1]];
            Prediction {
                age: Some(pass.inner.age[i]),
                groups: Some(row3(pass.inner.groups.row(i))),
                experts: Some([e(0), e(1), e(2)]),
                ..Prediction::gender_only(pass.fused.row(i))
            }
        })
        .collect()
}
