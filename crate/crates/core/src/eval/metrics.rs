use serde::{Deserialize, Serialize};

use crate::data::Gender;
use crate::error::{ensure, Result};
use crate::groups::{AgeGroupScheme, CoarseGroup};
use crate::models::Prediction;

/// Ground truth for one evaluated sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub age: f64,
    pub gender: Gender,
}

/// Gender accuracy on the samples whose true age falls in one coarse group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceAccuracy {
    pub samples: usize,
    /// Percent; `None` for an empty slice.
    pub accuracy: Option<f64>,
}

/// Percentages are in `[0, 100]`. Confusion tables are indexed
/// `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub gender_accuracy: f64,
    pub young: SliceAccuracy,
    pub adult: SliceAccuracy,
    pub elder: SliceAccuracy,
    /// Years; present when every prediction has an age estimate.
    pub mae: Option<f64>,
    /// Fine age-group accuracy, from the fine-group head when present and
    /// otherwise from the age estimate.
    pub exact: Option<f64>,
    /// Predicted fine group equal or adjacent to the true one.
    pub one_off: Option<f64>,
    pub gender_confusion: [[usize; 2]; 2],
    pub fine_confusion: Option<Vec<Vec<usize>>>,
    pub coarse_confusion: Option<[[usize; 3]; 3]>,
}

impl EvalReport {
    pub fn slice(&self, g: CoarseGroup) -> &SliceAccuracy {
        match g {
            CoarseGroup::Young => &self.young,
            CoarseGroup::Adult => &self.adult,
            CoarseGroup::Elder => &self.elder,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn percent(hits: usize, n: usize) -> f64 {
    100.0 * hits as f64 / n as f64
}

fn predicted_fine(p: &Prediction, scheme: &AgeGroupScheme) -> Option<usize> {
    p.fine_group().or_else(|| p.age.map(|a| scheme.fine(a)))
}

pub fn compute_metrics(predictions: &[Prediction], truths: &[Truth], scheme: &AgeGroupScheme) -> Result<EvalReport> {
    ensure!(
        predictions.len() == truths.len(),
        Contract,
        "{} predictions for {} ground truths",
        predictions.len(),
        truths.len()
    );
    ensure!(!truths.is_empty(), Contract, "nothing to evaluate");
    let n = truths.len();
    let mut gender_confusion = [[0usize; 2]; 2];
    let mut slices = [(0usize, 0usize); 3];
    for (p, t) in predictions.iter().zip(truths) {
        let (truth, guess) = (t.gender.index(), usize::from(p.gender_label()));
        gender_confusion[truth][guess] += 1;
        let g = scheme.coarse(t.age)?.index();
        slices[g].0 += 1;
        slices[g].1 += usize::from(truth == guess);
    }
    let correct = gender_confusion[0][0] + gender_confusion[1][1];
    let slice = |i: usize| SliceAccuracy {
        samples: slices[i].0,
        accuracy: (slices[i].0 > 0).then(|| percent(slices[i].1, slices[i].0)),
    };

    let mae = predictions
        .iter()
        .map(|p| p.age)
        .collect::<Option<Vec<f64>>>()
        .map(|ages| ages.iter().zip(truths).map(|(a, t)| (a - t.age).abs()).sum::<f64>() / n as f64);

    let fine: Option<Vec<usize>> = predictions.iter().map(|p| predicted_fine(p, scheme)).collect();
    let (exact, one_off, fine_confusion) = match fine {
        Some(fine) => {
            let k = scheme.fine_groups;
            let mut table = vec![vec![0usize; k]; k];
            let (mut hit, mut near) = (0, 0);
            for (f, t) in fine.iter().zip(truths) {
                let tf = scheme.fine(t.age);
                table[tf][(*f).min(k - 1)] += 1;
                hit += usize::from(*f == tf);
                near += usize::from(f.abs_diff(tf) <= 1);
            }
            (Some(percent(hit, n)), Some(percent(near, n)), Some(table))
        }
        None => (None, None, None),
    };

    let coarse_confusion = if predictions.iter().all(|p| p.groups.is_some()) {
        let mut table = [[0usize; 3]; 3];
        for (p, t) in predictions.iter().zip(truths) {
            let guess = p.coarse_group().expect("groups present").index();
            table[scheme.coarse(t.age)?.index()][guess] += 1;
        }
        Some(table)
    } else {
        None
    };

    Ok(EvalReport {
        samples: n,
        gender_accuracy: percent(correct, n),
        young: slice(0),
        adult: slice(1),
        elder: slice(2),
        mae,
        exact,
        one_off,
        gender_confusion,
        fine_confusion,
        coarse_confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(female: f64, age: f64) -> Prediction {
        Prediction {
            age: Some(age),
            ..Prediction::gender_only(&[1.0 - female, female])
        }
    }

    fn truth(age: f64, gender: Gender) -> Truth {
        Truth { age, gender }
    }

    #[test]
    fn adjacent_group_is_one_off_not_exact() {
        // Predicted group 3 (age 35), true group 4 (age 45).
        let r = compute_metrics(&[pred(0.9, 35.0)], &[truth(45.0, Gender::Female)], &AgeGroupScheme::default()).unwrap();
        assert_eq!(r.exact, Some(0.0));
        assert_eq!(r.one_off, Some(100.0));
    }

    #[test]
    fn perfect_predictions() {
        let truths = [truth(5.0, Gender::Male), truth(33.0, Gender::Female), truth(71.0, Gender::Male)];
        let preds: Vec<Prediction> = truths
            .iter()
            .map(|t| pred(if t.gender == Gender::Female { 0.8 } else { 0.1 }, t.age))
            .collect();
        let r = compute_metrics(&preds, &truths, &AgeGroupScheme::default()).unwrap();
        assert_eq!((r.gender_accuracy, r.exact, r.one_off, r.mae), (100.0, Some(100.0), Some(100.0), Some(0.0)));
        assert_eq!(r.young.accuracy, Some(100.0));
        assert_eq!(r.gender_confusion, [[2, 0], [0, 1]]);
        assert!(r.coarse_confusion.is_none());
    }

    #[test]
    fn length_mismatch_is_a_contract_error() {
        let e = compute_metrics(&[], &[truth(1.0, Gender::Male)], &AgeGroupScheme::default());
        assert!(matches!(e, Err(crate::MgaError::Contract(_))));
    }

    #[test]
    fn fine_head_takes_precedence_over_age() {
        let mut p = pred(0.1, 75.0);
        let mut f = vec![0.0; 8];
        f[2] = 1.0;
        p.fine_groups = Some(f);
        let r = compute_metrics(&[p], &[truth(25.0, Gender::Male)], &AgeGroupScheme::default()).unwrap();
        assert_eq!(r.exact, Some(100.0));
    }
}
