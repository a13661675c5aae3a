//! Finite-difference gradient checks for every layer type and every
//! composite training objective, on small deterministic inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{generate_synthetic, SynthConfig};
use crate::error::Result;
use crate::losses::{cross_entropy, one_hot};
use crate::models::ArchConfig;
use crate::nn::layers::{global_average_pool, global_average_pool_backward, relu, relu_backward};
use crate::nn::{
    finite_difference_check, softmax, softmax_backward, BatchNorm, Conv2d, Ctx, Dense, GradCheckOptions,
    GradCheckReport, MaxPool2d, ParameterStore, Tensor,
};
use crate::pipeline::objective::{can_objective, dgn_objective, in_objective, mga_objective};
use crate::pipeline::{make_batch, prepare, Batch, Networks, TrainConfig};

/// Name of the store entry that holds a layer's input during a check.
const INPUT: &str = "input";

#[derive(Debug, Clone)]
pub struct GradientCase {
    pub name: String,
    pub report: GradCheckReport,
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches")
}

/// Reduces a layer output to a scalar through fixed random coefficients,
/// returning the loss and its gradient with respect to the output.
fn probe(y: &Tensor, coef: &Tensor) -> (f64, Tensor) {
    let loss = y.data().iter().zip(coef.data()).map(|(a, b)| a * b).sum();
    (loss, coef.clone())
}

fn check(
    name: &str,
    store: &mut ParameterStore,
    eval: impl FnMut(&mut ParameterStore) -> Result<f64>,
    options: GradCheckOptions,
    rng: &mut ChaCha8Rng,
) -> Result<GradientCase> {
    let report = finite_difference_check(store, eval, options, rng)?;
    Ok(GradientCase {
        name: name.to_owned(),
        report,
    })
}

/// One case per layer type. The layer input lives in the store as a
/// parameter, so each case checks input and parameter gradients together.
pub fn layer_cases(seed: u64, options: GradCheckOptions) -> Result<Vec<GradientCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();

    for (name, stride) in [("conv2d", 1), ("conv2d_strided", 2)] {
        let conv = Conv2d::new("conv", 2, 3, (3, 3), stride);
        let mut store = ParameterStore::new();
        conv.init(&mut store, &mut rng);
        store.insert_param(INPUT, random(&mut rng, &[2, 2, 7, 7]));
        let (ho, wo) = conv.output_hw(7, 7)?;
        let coef = random(&mut rng, &[2, 3, ho, wo]);
        cases.push(check(
            name,
            &mut store,
            |s| {
                let x = s.get(INPUT)?.clone();
                let (y, cache) = conv.forward(s, &x)?;
                let (loss, g) = probe(&y, &coef);
                let dx = conv.backward(s, &cache, &g, true)?.expect("input grad");
                s.accumulate_grad(INPUT, dx.data())?;
                Ok(loss)
            },
            options,
            &mut rng,
        )?);
    }

    for (name, shape) in [("batch_norm_spatial", vec![4, 3, 3, 3]), ("batch_norm_dense", vec![12, 8])] {
        let bn = BatchNorm::new("bn", shape[1], 1e-5, 0.9);
        let mut store = ParameterStore::new();
        bn.init(&mut store);
        // Non-trivial affine parameters so their gradients are exercised.
        for p in ["bn.gamma", "bn.beta"] {
            let t = random(&mut rng, &[shape[1]]);
            *store.get_mut(p)? = t;
        }
        store.insert_param(INPUT, random(&mut rng, &shape));
        let coef = random(&mut rng, &shape);
        // A squared probe: a linear probe of a normalized output has zero
        // gradient along many input directions.
        cases.push(check(
            name,
            &mut store,
            |s| {
                let x = s.get(INPUT)?.clone();
                let (y, cache) = bn.forward(s, &x, &mut Ctx::train())?;
                let loss = y.data().iter().zip(coef.data()).map(|(a, b)| 0.5 * a * a * b).sum();
                let g = Tensor::new(y.shape(), y.data().iter().zip(coef.data()).map(|(a, b)| a * b).collect())?;
                let dx = bn.backward(s, &cache, &g)?;
                s.accumulate_grad(INPUT, dx.data())?;
                Ok(loss)
            },
            options,
            &mut rng,
        )?);
    }

    {
        let dense = Dense::new("dense", 12, 6);
        let mut store = ParameterStore::new();
        dense.init(&mut store, &mut rng);
        store.insert_param(INPUT, random(&mut rng, &[5, 12]));
        let coef = random(&mut rng, &[5, 6]);
        cases.push(check(
            "dense",
            &mut store,
            |s| {
                let x = s.get(INPUT)?.clone();
                let (y, cache) = dense.forward(s, &x)?;
                let (loss, g) = probe(&y, &coef);
                let dx = dense.backward(s, &cache, &g, true)?.expect("input grad");
                s.accumulate_grad(INPUT, dx.data())?;
                Ok(loss)
            },
            options,
            &mut rng,
        )?);
    }

    {
        let mut store = ParameterStore::new();
        // Keep inputs away from the kink at zero.
        let x = random(&mut rng, &[4, 40]).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
        store.insert_param(INPUT, x);
        let coef = random(&mut rng, &[4, 40]);
        cases.push(check(
            "relu",
            &mut store,
            |s| {
                let y = relu(s.get(INPUT)?);
                let (loss, g) = probe(&y, &coef);
                let dx = relu_backward(&y, &g)?;
                s.accumulate_grad(INPUT, dx.data())?;
                Ok(loss)
            },
            options,
            &mut rng,
        )?);
    }

    {
        let pool = MaxPool2d::new(3, 2);
        let mut store = ParameterStore::new();
        store.insert_param(INPUT, random(&mut rng, &[2, 3, 7, 7]));
        let coef = random(&mut rng, &[2, 3, 3, 3]);
        cases.push(check(
            "max_pool",
            &mut store,
            |s| {
                let (y, cache) = pool.forward(s.get(INPUT)?)?;
                let (loss, g) = probe(&y, &coef);
                let dx = pool.backward(&cache, &g)?;
                s.accumulate_grad(INPUT, dx.data())?;
                Ok(loss)
            },
            options,
            &mut rng,
        )?);
    }

    {
        let mut store = ParameterStore::new();
        store.insert_param(INPUT, random(&mut rng, &[2, 4, 4, 4]));
        let coef = random(&mut rng, &[2, 4]);
        cases.push(check(
            "global_average_pool",
            &mut store,
            |s| {
                let x = s.get(INPUT)?.clone();
                let y = global_average_pool(&x)?;
                let (loss, g) = probe(&y, &coef);
                let dx = global_average_pool_backward(x.shape(), &g)?;
                s.accumulate_grad(INPUT, dx.data())?;
                Ok(loss)
            },
            options,
            &mut rng,
        )?);
    }

    {
        let mut store = ParameterStore::new();
        store.insert_param(INPUT, random(&mut rng, &[30, 4]).scale(3.0));
        let labels: Vec<usize> = (0..30).map(|_| rng.gen_range(0..4)).collect();
        let targets = one_hot(&labels, 4)?;
        cases.push(check(
            "softmax_cross_entropy",
            &mut store,
            |s| {
                let p = softmax(s.get(INPUT)?)?;
                let (loss, dp) = cross_entropy(&p, &targets)?;
                let dz = softmax_backward(&p, &dp)?;
                s.accumulate_grad(INPUT, dz.data())?;
                Ok(loss)
            },
            options,
            &mut rng,
        )?);
    }
    Ok(cases)
}

/// A reduced configuration that keeps every code path of the full networks.
pub fn small_config() -> TrainConfig {
    let mut cfg = TrainConfig::desk();
    cfg.arch = ArchConfig {
        image_size: 30,
        base_filters: [3, 4, 5],
        width_multiplier: 1.0,
        dgn_hidden: [6, 5],
        ..ArchConfig::desk()
    };
    cfg
}

fn small_batch(cfg: &TrainConfig, n: usize, seed: u64) -> Result<Batch> {
    let records = generate_synthetic(&SynthConfig {
        samples: n,
        image_size: cfg.arch.image_size,
        seed,
        ..SynthConfig::default()
    })?;
    let prepared = prepare(&records, cfg)?;
    let refs: Vec<_> = prepared.iter().collect();
    make_batch(&refs, &cfg.arch, true, None, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// One case per composite objective, checked through the whole network in
/// training mode (batch statistics included).
pub fn objective_cases(seed: u64, options: GradCheckOptions) -> Result<Vec<GradientCase>> {
    let cfg = small_config();
    let batch = small_batch(&cfg, 12, seed)?;
    let nets = Networks::new(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let fusion = cfg.stage2.weights;
    let mga = cfg.stage4.weights;

    let mut cases = Vec::new();
    let mut store = nets.init_store(seed);
    cases.push(check(
        "can_objective",
        &mut store,
        |s| Ok(can_objective(&nets.can, s, &batch, &mut Ctx::train(), true)?.total),
        options,
        &mut rng,
    )?);
    let mut store = nets.init_store(seed);
    cases.push(check(
        "dgn_objective",
        &mut store,
        |s| Ok(dgn_objective(&nets.dgn, s, &batch, &mut Ctx::train(), true)?.total),
        options,
        &mut rng,
    )?);
    let inm = nets.integrated();
    let mut store = nets.init_store(seed);
    cases.push(check(
        "fusion_objective",
        &mut store,
        |s| Ok(in_objective(inm, s, &batch, &fusion, &mut Ctx::train(), true)?.total),
        options,
        &mut rng,
    )?);
    let mut store = nets.init_store(seed);
    cases.push(check(
        "mga_objective",
        &mut store,
        |s| Ok(mga_objective(&nets.mga, s, &batch, &mga, &mut Ctx::train(), true)?.total),
        options,
        &mut rng,
    )?);
    Ok(cases)
}
