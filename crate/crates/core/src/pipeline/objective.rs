//! Forward pass, composite loss and (optionally) backward pass for each
//! network. Gradients accumulate into the parameter store.

use crate::error::Result;
use crate::losses::{composite_loss, gender_ce, group_ce, mae_loss, CompositeLoss, LossKind, LossParts, LossWeights};
use crate::models::blocks::ClassHead;
use crate::models::{CanModel, DgnModel, InGrads, InModel, MgaModel};
use crate::nn::{Ctx, ParameterStore, Tensor};
use crate::pipeline::Batch;

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|g| g * s).collect()
}

/// Gender CE + age MAE.
pub fn can_objective(
    model: &CanModel,
    store: &mut ParameterStore,
    batch: &Batch,
    ctx: &mut Ctx,
    backward: bool,
) -> Result<CompositeLoss> {
    let pass = model.forward(store, batch.images()?, ctx)?;
    let (g, dg) = gender_ce(&pass.gender, &batch.gender)?;
    let (a, da) = mae_loss(&pass.age, &batch.ages)?;
    let parts = LossParts {
        gender: Some(g),
        age: Some(a),
        group: None,
    };
    let loss = composite_loss(LossKind::Can, parts, &LossWeights::default())?;
    if backward {
        let w = loss.weights;
        model.backward(store, &pass, &dg.scale(w.gender), &scaled(&da, w.age))?;
    }
    Ok(loss)
}

/// Gender CE + fine age-group CE.
pub fn dgn_objective(
    model: &DgnModel,
    store: &mut ParameterStore,
    batch: &Batch,
    ctx: &mut Ctx,
    backward: bool,
) -> Result<CompositeLoss> {
    let pass = model.forward(store, &batch.features, ctx)?;
    let (g, dg) = gender_ce(&pass.gender, &batch.gender)?;
    let (f, df) = group_ce(&pass.fine_groups, &batch.fine)?;
    let parts = LossParts {
        gender: Some(g),
        age: None,
        group: Some(f),
    };
    let loss = composite_loss(LossKind::Dgn, parts, &LossWeights::default())?;
    if backward {
        let w = loss.weights;
        model.backward(store, &pass, &dg.scale(w.gender), &df.scale(w.group))?;
    }
    Ok(loss)
}

/// Gender CE + alpha1 * age MAE + beta1 * coarse-group CE.
pub fn in_objective(
    model: &InModel,
    store: &mut ParameterStore,
    batch: &Batch,
    weights: &LossWeights,
    ctx: &mut Ctx,
    backward: bool,
) -> Result<CompositeLoss> {
    let pass = model.forward(store, batch.images()?, &batch.features, ctx)?;
    let (g, dg) = gender_ce(&pass.gender, &batch.gender)?;
    let (a, da) = mae_loss(&pass.age, &batch.ages)?;
    let (c, dc) = group_ce(&pass.groups, &batch.coarse)?;
    let parts = LossParts {
        gender: Some(g),
        age: Some(a),
        group: Some(c),
    };
    let loss = composite_loss(LossKind::Fusion, parts, weights)?;
    if backward {
        let w = loss.weights;
        let grads = InGrads {
            gender: Some(dg.scale(w.gender)),
            age: Some(scaled(&da, w.age)),
            groups: Some(dc.scale(w.group)),
            concat: None,
        };
        model.backward(store, &pass, grads, true)?;
    }
    Ok(loss)
}

/// CE of the fused gender output + lambda1 * age MAE + lambda2 * group CE.
pub fn mga_objective(
    model: &MgaModel,
    store: &mut ParameterStore,
    batch: &Batch,
    weights: &LossWeights,
    ctx: &mut Ctx,
    backward: bool,
) -> Result<CompositeLoss> {
    let pass = model.forward(store, batch.images()?, &batch.features, ctx)?;
    let (g, dg) = gender_ce(&pass.fused, &batch.gender)?;
    let (a, da) = mae_loss(&pass.inner.age, &batch.ages)?;
    let (c, dc) = group_ce(&pass.inner.groups, &batch.coarse)?;
    let parts = LossParts {
        gender: Some(g),
        age: Some(a),
        group: Some(c),
    };
    let loss = composite_loss(LossKind::Mga, parts, weights)?;
    if backward {
        let w = loss.weights;
        model.backward(
            store,
            &pass,
            &dg.scale(w.gender),
            Some(scaled(&da, w.age)),
            Some(dc.scale(w.group)),
            true,
        )?;
    }
    Ok(loss)
}

/// Frozen-trunk outputs reused by every expert epoch.
#[derive(Debug, Clone)]
pub struct ExpertCache {
    /// Concatenated features `[N, N_D + N_C]`.
    pub concat: Tensor,
    pub age: Vec<f64>,
    pub groups: Tensor,
    pub gender: Tensor,
    pub ages: Vec<f64>,
    pub coarse: Tensor,
}

impl ExpertCache {
    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Result<ExpertCache> {
        let rows = |t: &Tensor| Tensor::from_rows(&idx.iter().map(|&i| t.row(i).to_vec()).collect::<Vec<_>>());
        Ok(ExpertCache {
            concat: rows(&self.concat)?,
            age: idx.iter().map(|&i| self.age[i]).collect(),
            groups: rows(&self.groups)?,
            gender: rows(&self.gender)?,
            ages: idx.iter().map(|&i| self.ages[i]).collect(),
            coarse: rows(&self.coarse)?,
        })
    }
}

/// Runs the integrated network in inference mode over a batch and keeps what
/// an expert head needs.
pub fn expert_cache(model: &InModel, store: &ParameterStore, batch: &Batch) -> Result<ExpertCache> {
    let pass = model.forward(store, batch.images()?, &batch.features, &mut Ctx::infer())?;
    Ok(ExpertCache {
        concat: pass.concat,
        age: pass.age,
        groups: pass.groups,
        gender: batch.gender.clone(),
        ages: batch.ages.clone(),
        coarse: batch.coarse.clone(),
    })
}

/// Expert gender CE + alpha1 * age MAE + beta1 * group CE, where only the
/// expert head is trainable, so the age and group terms are constants.
pub fn expert_objective(
    head: &ClassHead,
    store: &mut ParameterStore,
    cache: &ExpertCache,
    weights: &LossWeights,
    backward: bool,
) -> Result<CompositeLoss> {
    let (probs, hc) = head.forward(store, &cache.concat)?;
    let (g, dg) = gender_ce(&probs, &cache.gender)?;
    let (a, _) = mae_loss(&cache.age, &cache.ages)?;
    let (c, _) = group_ce(&cache.groups, &cache.coarse)?;
    let parts = LossParts {
        gender: Some(g),
        age: Some(a),
        group: Some(c),
    };
    let loss = composite_loss(LossKind::Fusion, parts, weights)?;
    if backward {
        head.backward_params(store, &hc, &dg.scale(loss.weights.gender))?;
    }
    Ok(loss)
}
