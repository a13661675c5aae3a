#![allow(dead_code)]

use mga::data::Gender;
use mga::eval::Truth;
use mga::geometry::{frontal_template, LandmarkSet};
use mga::models::Prediction;
use rand::Rng;

/// A frontal template with per-point jitter, in pixel-like units.
pub fn random_landmarks(rng: &mut impl Rng) -> LandmarkSet {
    let t = frontal_template();
    let width = rng.gen_range(40.0..120.0);
    let (cx, cy) = (rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
    let points = t
        .points()
        .iter()
        .map(|p| {
            [
                cx + width * (p[0] + rng.gen_range(-0.03..0.03)),
                cy + width * (p[1] + rng.gen_range(-0.03..0.03)),
            ]
        })
        .collect();
    LandmarkSet::new(points).expect("68 points")
}

/// Metrics computed directly from their definitions, one sample at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMetrics {
    pub gender: f64,
    /// Young, adult, elder; `None` for an empty slice.
    pub slices: [Option<f64>; 3],
    pub mae: f64,
    pub exact: f64,
    pub one_off: f64,
}

fn coarse(age: f64) -> usize {
    if age < 20.0 {
        0
    } else if age < 50.0 {
        1
    } else {
        2
    }
}

fn decade(age: f64) -> i64 {
    ((age / 10.0).floor() as i64).clamp(0, 7)
}

/// Brute-force reference: every prediction carries an age estimate and the
/// fine group is read from it.
pub fn oracle_metrics(preds: &[(f64, f64)], truths: &[(f64, Gender)]) -> OracleMetrics {
    let n = preds.len() as f64;
    let mut right = 0.0;
    let mut slice_n = [0.0; 3];
    let mut slice_right = [0.0; 3];
    let mut abs = 0.0;
    let mut exact = 0.0;
    let mut near = 0.0;
    for (&(p_female, p_age), &(age, gender)) in preds.iter().zip(truths) {
        let guess = if p_female > 1.0 - p_female { Gender::Female } else { Gender::Male };
        let ok = if guess == gender { 1.0 } else { 0.0 };
        right += ok;
        slice_n[coarse(age)] += 1.0;
        slice_right[coarse(age)] += ok;
        abs += (p_age - age).abs();
        let d = (decade(p_age) - decade(age)).abs();
        if d == 0 {
            exact += 1.0;
        }
        if d <= 1 {
            near += 1.0;
        }
    }
    let mut slices = [None; 3];
    for g in 0..3 {
        if slice_n[g] > 0.0 {
            slices[g] = Some(100.0 * slice_right[g] / slice_n[g]);
        }
    }
    OracleMetrics {
        gender: 100.0 * right / n,
        slices,
        mae: abs / n,
        exact: 100.0 * exact / n,
        one_off: 100.0 * near / n,
    }
}

/// Random `(p_female, predicted age)` / `(age, gender)` pairs.
pub fn random_prediction_set(rng: &mut impl Rng, n: usize) -> (Vec<(f64, f64)>, Vec<(f64, Gender)>) {
    let preds = (0..n)
        .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..90.0)))
        .collect();
    let truths = (0..n)
        .map(|_| {
            let g = if rng.gen_bool(0.5) { Gender::Female } else { Gender::Male };
            (rng.gen_range(0.0..85.0), g)
        })
        .collect();
    (preds, truths)
}

pub fn to_library(preds: &[(f64, f64)], truths: &[(f64, Gender)]) -> (Vec<Prediction>, Vec<Truth>) {
    let p = preds
        .iter()
        .map(|&(f, a)| {
            let mut p = Prediction::gender_only(&[1.0 - f, f]);
            p.age = Some(a);
            p
        })
        .collect();
    let t = truths.iter().map(|&(age, gender)| Truth { age, gender }).collect();
    (p, t)
}

/// Uniform point on the probability simplex.
pub fn simplex<const K: usize>(rng: &mut impl Rng) -> [f64; K] {
    let mut v = [0.0; K];
    for x in v.iter_mut() {
        *x = -rng.gen_range(f64::MIN_POSITIVE..1.0).ln();
    }
    let s: f64 = v.iter().sum();
    v.map(|x| x / s)
}
