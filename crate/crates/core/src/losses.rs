//! Training objectives: age MAE, gender and age-group cross entropy, and the
//! weighted composites used by each training stage.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, MgaError, Result};
use crate::nn::Tensor;

/// Lower clamp applied to probabilities before taking the log.
pub const PROB_CLAMP: f64 = 1e-12;

const ROW_SUM_TOL: f64 = 1e-6;

/// Mean absolute error and its gradient with respect to the predictions.
/// The subgradient at zero deviation is 0.
pub fn mae_loss(pred: &[f64], truth: &[f64]) -> Result<(f64, Vec<f64>)> {
    ensure!(!pred.is_empty(), Contract, "mae_loss on an empty batch");
    ensure!(
        pred.len() == truth.len(),
        Contract,
        "mae_loss got {} predictions for {} targets",
        pred.len(),
        truth.len()
    );
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let d = p - t;
            loss += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss / n, grad))
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    ensure!(!labels.is_empty(), Contract, "one_hot on an empty batch");
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        ensure!(l < classes, Contract, "label {l} out of range for {classes} classes");
        data[i * classes + l] = 1.0;
    }
    Tensor::new(&[labels.len(), classes], data)
}

/// `-(1/N) sum_i sum_c y_ic ln(max(p_ic, clamp))` with its gradient with
/// respect to the probabilities.
pub fn cross_entropy(probs: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    ensure!(
        probs.shape().len() == 2 && probs.shape() == targets.shape(),
        Contract,
        "cross entropy needs matching [N, G] probabilities and one-hot targets, got {:?} and {:?}",
        probs.shape(),
        targets.shape()
    );
    let g = probs.shape()[1];
    let n = probs.rows();
    for i in 0..n {
        let row = probs.row(i);
        let s: f64 = row.iter().sum();
        ensure!(
            (s - 1.0).abs() <= ROW_SUM_TOL && row.iter().all(|&p| p >= 0.0),
            Contract,
            "probability row {i} sums to {s}"
        );
        let t = targets.row(i);
        let ones = t.iter().filter(|&&v| v == 1.0).count();
        let zeros = t.iter().filter(|&&v| v == 0.0).count();
        ensure!(
            ones == 1 && zeros == g - 1,
            Contract,
            "target row {i} is not one-hot: {t:?}"
        );
    }
    let nf = n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; probs.len()];
    for ((p, y), d) in probs.data().iter().zip(targets.data()).zip(grad.iter_mut()) {
        if *y != 0.0 {
            loss -= y * p.max(PROB_CLAMP).ln();
            if *p >= PROB_CLAMP {
                *d = -y / (nf * p);
            }
        }
    }
    Ok((loss / nf, Tensor::new(probs.shape(), grad)?))
}

pub fn gender_ce(probs: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    ensure!(
        probs.shape().len() == 2 && probs.shape()[1] == 2,
        Contract,
        "gender probabilities must be [N, 2], got {:?}",
        probs.shape()
    );
    cross_entropy(probs, targets)
}

pub fn group_ce(probs: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    cross_entropy(probs, targets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha1: f64,
    pub beta1: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            beta1: 1.0,
            lambda1: 0.1,
            lambda2: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha1, self.beta1, self.lambda1, self.lambda2];
        ensure!(
            all.iter().all(|w| w.is_finite() && *w >= 0.0),
            Config,
            "loss weights must be finite and non-negative: {self:?}"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Age MAE + gender CE.
    Can,
    /// Fine age-group CE + gender CE.
    Dgn,
    /// Gender CE + alpha1 * age MAE + beta1 * coarse group CE.
    Fusion,
    /// CE on fused gender + lambda1 * age MAE + lambda2 * coarse group CE.
    Mga,
}

/// Component values feeding a composite loss. For [`LossKind::Mga`] the
/// gender term must be the cross entropy of the fused probabilities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub gender: Option<f64>,
    pub age: Option<f64>,
    pub group: Option<f64>,
}

/// Multipliers applied to each component; these are also the gradients of
/// the total with respect to each component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TermWeights {
    pub gender: f64,
    pub age: f64,
    pub group: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeLoss {
    pub total: f64,
    pub parts: LossParts,
    pub weights: TermWeights,
}

pub fn term_weights(kind: LossKind, w: &LossWeights) -> TermWeights {
    match kind {
        LossKind::Can => TermWeights {
            gender: 1.0,
            age: 1.0,
            group: 0.0,
        },
        LossKind::Dgn => TermWeights {
            gender: 1.0,
            age: 0.0,
            group: 1.0,
        },
        LossKind::Fusion => TermWeights {
            gender: 1.0,
            age: w.alpha1,
            group: w.beta1,
        },
        // The expanded form pairs lambda1 with the age term and lambda2 with
        // the group term.
        LossKind::Mga => TermWeights {
            gender: 1.0,
            age: w.lambda1,
            group: w.lambda2,
        },
    }
}

pub fn composite_loss(kind: LossKind, parts: LossParts, weights: &LossWeights) -> Result<CompositeLoss> {
    weights.validate()?;
    let tw = term_weights(kind, weights);
    let need = |v: Option<f64>, what: &str| -> Result<f64> {
        v.ok_or_else(|| MgaError::Contract(format!("{kind:?} loss requires the {what} component")))
    };
    let gender = need(parts.gender, "gender")?;
    let total = match kind {
        LossKind::Can => gender + need(parts.age, "age")?,
        LossKind::Dgn => gender + need(parts.group, "group")?,
        LossKind::Fusion | LossKind::Mga => {
            gender + tw.age * need(parts.age, "age")? + tw.group * need(parts.group, "group")?
        }
    };
    Ok(CompositeLoss {
        total,
        parts,
        weights: tw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rotate<T: Clone>(k: usize, v: &[T]) -> Vec<T> {
        v[k..].iter().chain(&v[..k]).cloned().collect()
    }

    fn probs(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae_loss(&[3.0, 4.0], &[3.0, 4.0]).unwrap().0, 0.0);
        assert_eq!(mae_loss(&[22.0, 27.0], &[20.0, 30.0]).unwrap().0, 2.5);
        assert_eq!(mae_loss(&[13.0, 2.0, 7.0], &[10.0, -1.0, 4.0]).unwrap().0, 3.0);
        let (_, g) = mae_loss(&[1.0, 2.0, 3.0], &[1.0, 3.0, 0.0]).unwrap();
        assert_eq!(g, vec![0.0, -1.0 / 3.0, 1.0 / 3.0]);
        assert!(matches!(mae_loss(&[], &[]), Err(MgaError::Contract(_))));
    }

    #[test]
    fn gender_ce_examples() {
        let y = one_hot(&[0, 1], 2).unwrap();
        assert_eq!(gender_ce(&probs(&[vec![1.0, 0.0], vec![0.0, 1.0]]), &y).unwrap().0, 0.0);
        let u = gender_ce(&probs(&[vec![0.5, 0.5], vec![0.5, 0.5]]), &y).unwrap().0;
        assert!((u - std::f64::consts::LN_2).abs() < 1e-15);
        let v = gender_ce(&probs(&[vec![0.9, 0.1], vec![0.2, 0.8]]), &y).unwrap().0;
        let want = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((v - want).abs() < 1e-15);
        assert!((v - 0.1643).abs() < 1e-4);
    }

    #[test]
    fn ce_rejects_malformed_targets() {
        let p = probs(&[vec![0.5, 0.5]]);
        let bad = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert!(matches!(gender_ce(&p, &bad), Err(MgaError::Contract(_))));
        let half = Tensor::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert!(gender_ce(&p, &half).is_err());
        let unnormalized = probs(&[vec![0.7, 0.7]]);
        assert!(gender_ce(&unnormalized, &one_hot(&[0], 2).unwrap()).is_err());
    }

    #[test]
    fn group_ce_examples() {
        let u = probs(&[vec![0.125; 8]]);
        let v = group_ce(&u, &one_hot(&[5], 8).unwrap()).unwrap().0;
        assert!((v - 8f64.ln()).abs() < 1e-12);
        // G = 3 hand batch: -(ln 0.7 + ln 0.5 + ln 0.1) / 3
        let p = probs(&[vec![0.7, 0.2, 0.1], vec![0.25, 0.5, 0.25], vec![0.6, 0.3, 0.1]]);
        let v = group_ce(&p, &one_hot(&[0, 1, 2], 3).unwrap()).unwrap().0;
        assert!((v - 1.1174690724975744).abs() < 1e-12);
        let perfect = probs(&[vec![0.0, 0.0, 1.0]]);
        assert_eq!(group_ce(&perfect, &one_hot(&[2], 3).unwrap()).unwrap().0, 0.0);
    }

    #[test]
    fn clamp_keeps_saturated_loss_finite() {
        let p = probs(&[vec![1.0, 0.0]]);
        let (v, g) = gender_ce(&p, &one_hot(&[1], 2).unwrap()).unwrap();
        assert!((v + PROB_CLAMP.ln()).abs() < 1e-9);
        assert!(g.all_finite());
    }

    #[test]
    fn fusion_weight_cases() {
        let parts = LossParts {
            gender: Some(0.4),
            age: Some(3.0),
            group: Some(0.9),
        };
        let ones = LossWeights {
            alpha1: 1.0,
            beta1: 1.0,
            ..Default::default()
        };
        assert!((composite_loss(LossKind::Fusion, parts, &ones).unwrap().total - 4.3).abs() < 1e-12);
        let zeros = LossWeights {
            alpha1: 0.0,
            beta1: 0.0,
            ..Default::default()
        };
        assert_eq!(composite_loss(LossKind::Fusion, parts, &zeros).unwrap().total, 0.4);
        let missing = LossParts {
            gender: Some(0.1),
            ..Default::default()
        };
        assert!(matches!(
            composite_loss(LossKind::Can, missing, &ones),
            Err(MgaError::Contract(_))
        ));
    }

    #[test]
    fn mga_two_sample_hand_trace() {
        // fused gender probs (0.7, 0.3) label 0 and (0.4, 0.6) label 1,
        // ages pred (25, 60) truth (20, 62), group probs (0.2,0.7,0.1) label 1
        // and (0.1,0.3,0.6) label 2.
        let fused = probs(&[vec![0.7, 0.3], vec![0.4, 0.6]]);
        let g = gender_ce(&fused, &one_hot(&[0, 1], 2).unwrap()).unwrap().0;
        let a = mae_loss(&[25.0, 60.0], &[20.0, 62.0]).unwrap().0;
        let grp = group_ce(
            &probs(&[vec![0.2, 0.7, 0.1], vec![0.1, 0.3, 0.6]]),
            &one_hot(&[1, 2], 3).unwrap(),
        )
        .unwrap()
        .0;
        let parts = LossParts {
            gender: Some(g),
            age: Some(a),
            group: Some(grp),
        };
        let total = composite_loss(LossKind::Mga, parts, &LossWeights::default()).unwrap().total;
        let want = -(0.7f64.ln() + 0.6f64.ln()) / 2.0 + 0.1 * 3.5 - 0.1 * (0.7f64.ln() + 0.6f64.ln()) / 2.0;
        assert!((total - want).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn fusion_is_linear_in_alpha(
            g in 0.0f64..3.0, a in 0.0f64..30.0, grp in 0.0f64..3.0, alpha in 0.0f64..5.0,
        ) {
            let parts = LossParts { gender: Some(g), age: Some(a), group: Some(grp) };
            let w1 = LossWeights { alpha1: alpha, ..Default::default() };
            let w2 = LossWeights { alpha1: 2.0 * alpha, ..Default::default() };
            let w0 = LossWeights { alpha1: 0.0, ..Default::default() };
            let t0 = composite_loss(LossKind::Fusion, parts, &w0).unwrap().total;
            let t1 = composite_loss(LossKind::Fusion, parts, &w1).unwrap().total;
            let t2 = composite_loss(LossKind::Fusion, parts, &w2).unwrap().total;
            prop_assert!(((t2 - t0) - 2.0 * (t1 - t0)).abs() < 1e-9);
        }

        #[test]
        fn losses_are_batch_permutation_invariant(
            rows in proptest::collection::vec((0.01f64..0.99, 0usize..2, 0.0f64..80.0, 0.0f64..80.0), 2..12),
            rot in 0usize..12,
        ) {
            let p: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, 1.0 - r.0]).collect();
            let l: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let pa: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let ta: Vec<f64> = rows.iter().map(|r| r.3).collect();
            let k = rot % rows.len();
            let ce1 = gender_ce(&probs(&p), &one_hot(&l, 2).unwrap()).unwrap().0;
            let ce2 = gender_ce(&probs(&rotate(k, &p)), &one_hot(&rotate(k, &l), 2).unwrap()).unwrap().0;
            prop_assert!((ce1 - ce2).abs() < 1e-12);
            prop_assert!(ce1 >= 0.0);
            let m1 = mae_loss(&pa, &ta).unwrap().0;
            let m2 = mae_loss(&rotate(k, &pa), &rotate(k, &ta)).unwrap().0;
            prop_assert!((m1 - m2).abs() < 1e-9);
        }
    }
}
