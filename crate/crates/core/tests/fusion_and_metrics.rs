mod common;

use mga::eval::compute_metrics;
use mga::groups::AgeGroupScheme;
use mga::models::{fuse, fuse_experts};
use mga::nn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn one_hot_gate_selects_expert_and_output_stays_in_hull() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let experts = [common::simplex::<2>(&mut rng), common::simplex::<2>(&mut rng), common::simplex::<2>(&mut rng)];
        let k = rng.gen_range(0..3);
        let mut onehot = [0.0; 3];
        onehot[k] = 1.0;
        let picked = fuse(&onehot, &experts).unwrap();
        assert!((picked[0] - experts[k][0]).abs() <= 1e-9 && (picked[1] - experts[k][1]).abs() <= 1e-9);

        let gate = common::simplex::<3>(&mut rng);
        let fused = fuse(&gate, &experts).unwrap();
        assert!((fused[0] + fused[1] - 1.0).abs() <= 1e-9);
        for c in 0..2 {
            let lo = experts.iter().map(|e| e[c]).fold(f64::INFINITY, f64::min);
            let hi = experts.iter().map(|e| e[c]).fold(f64::NEG_INFINITY, f64::max);
            assert!(fused[c] >= lo - 1e-12 && fused[c] <= hi + 1e-12);
        }
    }
}

#[test]
fn batched_fusion_matches_single_sample_fusion() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 50;
    let gates: Vec<[f64; 3]> = (0..n).map(|_| common::simplex::<3>(&mut rng)).collect();
    let experts: Vec<[[f64; 2]; 3]> = (0..n)
        .map(|_| [common::simplex::<2>(&mut rng), common::simplex::<2>(&mut rng), common::simplex::<2>(&mut rng)])
        .collect();
    let gate = Tensor::new(&[n, 3], gates.iter().flatten().copied().collect()).unwrap();
    let e: [Tensor; 3] = std::array::from_fn(|k| {
        Tensor::new(&[n, 2], experts.iter().flat_map(|x| x[k]).collect()).unwrap()
    });
    let fused = fuse_experts(&gate, &e).unwrap();
    for i in 0..n {
        let want = fuse(&gates[i], &experts[i]).unwrap();
        assert_eq!(fused.row(i), &want[..]);
    }
}

#[test]
fn equal_experts_make_the_gate_irrelevant() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let e = common::simplex::<2>(&mut rng);
        let fused = fuse(&common::simplex::<3>(&mut rng), &[e, e, e]).unwrap();
        assert!((fused[0] - e[0]).abs() <= 1e-12 && (fused[1] - e[1]).abs() <= 1e-12);
    }
}

#[test]
fn metrics_match_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let scheme = AgeGroupScheme::default();
    for _ in 0..100 {
        let n = rng.gen_range(1..200);
        let (preds, truths) = common::random_prediction_set(&mut rng, n);
        let want = common::oracle_metrics(&preds, &truths);
        let (p, t) = common::to_library(&preds, &truths);
        let got = compute_metrics(&p, &t, &scheme).unwrap();
        assert_eq!(got.gender_accuracy, want.gender);
        assert_eq!([got.young.accuracy, got.adult.accuracy, got.elder.accuracy], want.slices);
        assert_eq!(got.mae, Some(want.mae));
        assert_eq!(got.exact, Some(want.exact));
        assert_eq!(got.one_off, Some(want.one_off));
        assert!(got.one_off >= got.exact);
    }
}

#[test]
fn metrics_are_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let scheme = AgeGroupScheme::default();
    let (preds, truths) = common::random_prediction_set(&mut rng, 64);
    let (p, t) = common::to_library(&preds, &truths);
    let base = compute_metrics(&p, &t, &scheme).unwrap();
    let mut order: Vec<usize> = (0..64).collect();
    order.reverse();
    order.swap(3, 40);
    let p2: Vec<_> = order.iter().map(|&i| p[i].clone()).collect();
    let t2: Vec<_> = order.iter().map(|&i| t[i]).collect();
    let other = compute_metrics(&p2, &t2, &scheme).unwrap();
    assert_eq!(other.gender_accuracy, base.gender_accuracy);
    assert_eq!(other.exact, base.exact);
    assert!((other.mae.unwrap() - base.mae.unwrap()).abs() < 1e-12);
}
