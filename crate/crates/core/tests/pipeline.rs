use mga::data::{generate_synthetic, SampleRecord, SynthConfig};
use mga::diagnostics::small_config;
use mga::pipeline::objective::in_objective;
use mga::pipeline::{
    make_batch, predict, prepare, run_stage, ModelKind, Networks, RunLayout, StagePlan, TrainConfig, Trainer,
};
use mga::nn::Ctx;
use mga::{losses::LossWeights, MgaError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quick_config() -> TrainConfig {
    let mut cfg = small_config();
    for k in 1..=4 {
        let h = cfg.stage_mut(k).unwrap();
        h.epochs = 2;
        h.batch_size = 16;
    }
    cfg
}

fn records(n: usize, cfg: &TrainConfig) -> Vec<SampleRecord> {
    generate_synthetic(&SynthConfig {
        samples: n,
        image_size: cfg.arch.image_size,
        seed: 5,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn expert_stage_only_touches_expert_layers() {
    let cfg = quick_config();
    let data = records(80, &cfg);
    let mut t = Trainer::new(cfg, &data).unwrap();
    t.run_stage(1).unwrap();
    t.run_stage(2).unwrap();
    let before = t.store.clone();
    t.run_stage(3).unwrap();
    assert!(t.store.identical_outside(&before, &["mga.expert"]));
    assert!(!t.store.identical_outside(&before, &[]));
    for g in ["young", "adult", "elder"] {
        let name = format!("mga.expert.{g}.weight");
        assert_ne!(t.store.get(&name).unwrap(), before.get(&name).unwrap(), "{name} did not train");
    }
}

#[test]
fn seeded_runs_repeat_their_loss_histories() {
    let cfg = quick_config();
    let data = records(60, &cfg);
    let run = || {
        let mut t = Trainer::new(cfg.clone(), &data).unwrap();
        (1..=4).map(|k| t.run_stage(k).unwrap()).collect::<Vec<_>>()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.seed += 1;
    let mut t = Trainer::new(other, &data).unwrap();
    assert_ne!(t.run_stage(1).unwrap(), a[0]);
}

#[test]
fn stages_require_their_predecessor() {
    let cfg = quick_config();
    let data = records(40, &cfg);
    let mut t = Trainer::new(cfg.clone(), &data).unwrap();
    for k in 2..=4 {
        assert!(matches!(t.run_stage(k), Err(MgaError::State(_))), "stage {k}");
    }
    let prepared = prepare(&data, &cfg).unwrap();
    assert!(matches!(
        predict(ModelKind::Mga, &cfg, &t.store, &prepared),
        Err(MgaError::State(_))
    ));
}

#[test]
fn fusion_loss_with_unit_weights_is_the_plain_sum() {
    let cfg = quick_config();
    let data = records(12, &cfg);
    let prepared = prepare(&data, &cfg).unwrap();
    let refs: Vec<_> = prepared.iter().collect();
    let batch = make_batch(&refs, &cfg.arch, true, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let nets = Networks::new(&cfg);
    let mut store = nets.init_store(1);
    let unit = LossWeights {
        alpha1: 1.0,
        beta1: 1.0,
        ..LossWeights::default()
    };
    let loss = in_objective(nets.integrated(), &mut store, &batch, &unit, &mut Ctx::train(), false).unwrap();
    let p = loss.parts;
    assert_eq!(loss.total, p.gender.unwrap() + p.age.unwrap() + p.group.unwrap());
}

#[test]
fn stage_plans_freeze_what_the_schedule_says() {
    let cfg = quick_config();
    let p3 = StagePlan::for_stage(3, &cfg).unwrap();
    assert_eq!(p3.len(), 3);
    for plan in &p3 {
        let g = plan.expert.unwrap();
        assert!(plan.is_trainable(&format!("mga.expert.{g}.weight")));
        assert!(!plan.is_trainable("in.head.gender.weight"));
        assert!(!plan.is_trainable("can.block1.conv.weight"));
    }
    let p4 = &StagePlan::for_stage(4, &cfg).unwrap()[0];
    for name in ["can.block1.conv.weight", "dgn.hidden1.fc.weight", "in.head.group.weight", "mga.expert.elder.bias"] {
        assert!(p4.is_trainable(name), "{name}");
    }
}

#[test]
fn run_directory_chains_stages_through_checkpoints() {
    let cfg = quick_config();
    let data = records(60, &cfg);
    let dir = tempfile::tempdir().unwrap();
    let layout = RunLayout::new(dir.path());
    assert!(matches!(run_stage(2, &cfg, &data, &layout), Err(MgaError::State(_))));
    for k in 1..=4 {
        run_stage(k, &cfg, &data, &layout).unwrap();
    }
    for name in [
        "stage1.ckpt",
        "stage2.ckpt",
        "stage3.young.ckpt",
        "stage3.adult.ckpt",
        "stage3.elder.ckpt",
        "stage4.ckpt",
        "stage4.loss.csv",
        "train.toml",
        "arch.toml",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let store = layout.load_stage(4).unwrap();
    let preds = predict(ModelKind::Mga, &cfg, &store, &prepare(&data[..5], &cfg).unwrap()).unwrap();
    assert_eq!(preds.len(), 5);
    for p in &preds {
        p.validate().unwrap();
    }
    assert_eq!(TrainConfig::load(&layout.train_config()).unwrap(), cfg);
}

#[test]
fn final_stage_keeps_batch_norm_statistics_fixed() {
    let cfg = quick_config();
    assert!(!cfg.stage4.batch_stats && cfg.stage1.batch_stats);
    let data = records(60, &cfg);
    let mut t = Trainer::new(cfg, &data).unwrap();
    for k in 1..=3 {
        t.run_stage(k).unwrap();
    }
    let before = t.store.clone();
    t.run_stage(4).unwrap();
    let stats: Vec<String> = t.store.names().filter(|n| n.contains(".running_")).map(String::from).collect();
    assert!(!stats.is_empty());
    for name in &stats {
        assert_eq!(t.store.get(name).unwrap(), before.get(name).unwrap(), "{name}");
    }
    assert_ne!(
        t.store.get("can.block1.conv.weight").unwrap(),
        before.get("can.block1.conv.weight").unwrap()
    );
}

#[test]
fn batch_stats_defaults_on_when_omitted_from_toml() {
    let text = TrainConfig::desk().to_toml().replace("batch_stats = true\n", "");
    let cfg = TrainConfig::from_toml(&text).unwrap();
    assert!(cfg.stage1.batch_stats && !cfg.stage4.batch_stats);
}
