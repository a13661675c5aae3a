use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::groups::CoarseGroup;
use crate::models::networks::predictions_from_pass;
use crate::models::Prediction;
use crate::nn::{Ctx, ParameterStore};
use crate::pipeline::prepare::{batch_ranges, make_batch, PreparedSample};
use crate::pipeline::trainer::{Networks, EVAL_BATCH};
use crate::pipeline::TrainConfig;

/// Which network (and which gender output) to read predictions from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Can,
    Dgn,
    In,
    /// Integrated trunk with the expert of the sample's true age group.
    InExpert,
    Mga,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Can,
        ModelKind::Dgn,
        ModelKind::In,
        ModelKind::InExpert,
        ModelKind::Mga,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Can => "can",
            ModelKind::Dgn => "dgn",
            ModelKind::In => "in",
            ModelKind::InExpert => "in-expert",
            ModelKind::Mga => "mga",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// The stage marker that must be present before this model can predict.
    pub fn required_stage(self) -> usize {
        match self {
            ModelKind::Can | ModelKind::Dgn => 1,
            ModelKind::In => 2,
            ModelKind::InExpert => 3,
            ModelKind::Mga => 4,
        }
    }
}

/// Inference-mode predictions in sample order.
pub fn predict(
    kind: ModelKind,
    cfg: &TrainConfig,
    store: &ParameterStore,
    samples: &[PreparedSample],
) -> Result<Vec<Prediction>> {
    let stage = kind.required_stage();
    ensure!(
        store.is_done(&format!("stage{stage}")),
        State,
        "{} predictions need the stage {stage} checkpoint",
        kind.name()
    );
    let nets = Networks::new(cfg);
    let refs: Vec<&PreparedSample> = samples.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = Vec::with_capacity(samples.len());
    for r in batch_ranges(refs.len(), EVAL_BATCH) {
        let chunk = &refs[r];
        let batch = make_batch(chunk, &cfg.arch, kind != ModelKind::Dgn, None, &mut rng)?;
        match kind {
            ModelKind::Can => out.extend(nets.can.predict(store, batch.images()?)?),
            ModelKind::Dgn => out.extend(nets.dgn.predict(store, &batch.features)?),
            ModelKind::In => out.extend(nets.integrated().predict(store, batch.images()?, &batch.features)?),
            ModelKind::Mga | ModelKind::InExpert => {
                let pass = nets.mga.forward(store, batch.images()?, &batch.features, &mut Ctx::infer())?;
                let mut preds = predictions_from_pass(&pass);
                if kind == ModelKind::InExpert {
                    for (p, s) in preds.iter_mut().zip(chunk) {
                        let g = CoarseGroup::from_index(s.coarse).expect("coarse index");
                        p.gender = p.experts.expect("mga predictions carry experts")[g.index()];
                    }
                }
                out.extend(preds);
            }
        }
    }
    Ok(out)
}
