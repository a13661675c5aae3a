//! Command-line front end. Every subcommand maps to library calls; errors
//! become one `error code=<kind> exit=<n> message=<json string>` line on
//! stderr and the matching exit status.
//!
//! Defaults: seed 7, output directory `runs`, fold 0, desk training config.
//! Each flag can also be set through an `MGA_*` environment variable.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::data::{generate_synthetic, load_manifest, make_folds, save_manifest, Gender, SampleRecord, SynthConfig};
use crate::error::{MgaError, Result};
use crate::eval::{compute_cam, compute_metrics, export_cam, CamHead, EvalReport, Truth};
use crate::geometry::build_feature;
use crate::models::Prediction;
use crate::pipeline::{predict, prepare, run_stage, ModelKind, Networks, RunLayout, TrainConfig};

pub const DEFAULT_SEED: u64 = 7;
pub const MANIFEST_NAME: &str = "manifest.csv";

#[derive(Debug, Parser)]
#[command(name = "mga", version, about = "Gender classification with age-group experts")]
pub struct Cli {
    #[command(flatten)]
    pub run: RunConfig,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// TOML config: a synthetic-data config for `synth`, a training config otherwise.
    #[arg(long, global = true, env = "MGA_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "MGA_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true, env = "MGA_OUT", default_value = "runs")]
    pub out: PathBuf,
    /// 1, 2, 3, 4 or `all`.
    #[arg(long, global = true, env = "MGA_STAGE", default_value = "all")]
    pub stage: String,
    /// Fold index or `all`.
    #[arg(long, global = true, env = "MGA_FOLD", default_value = "0")]
    pub fold: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset into `{out}/manifest.csv`.
    Synth {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train stages on the training folds into `{out}/fold{k}`.
    Train {
        #[arg(long, env = "MGA_MANIFEST")]
        manifest: PathBuf,
    },
    /// Evaluate trained models on held-out folds, or score a predictions file.
    Eval {
        #[arg(long, env = "MGA_MANIFEST", required_unless_present = "predictions")]
        manifest: Option<PathBuf>,
        /// CSV with columns `age,gender,pred_age,pred_female`; skips the models.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Comma-separated model names; defaults to every trained model.
        #[arg(long)]
        models: Option<String>,
    },
    /// Print one JSON prediction per manifest row.
    Infer {
        #[arg(long, env = "MGA_MANIFEST")]
        manifest: PathBuf,
        #[arg(long, default_value = "mga")]
        model: String,
    },
    /// Write geometric feature vectors for every manifest row.
    GeoExtract {
        #[arg(long, env = "MGA_MANIFEST")]
        manifest: PathBuf,
    },
    /// Export class activation maps for manifest rows.
    Cam {
        #[arg(long, env = "MGA_MANIFEST")]
        manifest: PathBuf,
        /// can, in, young, adult or elder.
        #[arg(long, default_value = "can")]
        head: String,
        /// Target class: male or female. Defaults to the true label.
        #[arg(long)]
        class: Option<String>,
        /// Row indices; defaults to the first row.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        rows: Vec<usize>,
    },
    /// Print parameter counts of the configured networks.
    Params {
        /// Count the reference (227 px) configuration instead of `--config`.
        #[arg(long)]
        reference: bool,
    },
}

/// Parses `args` (including the program name), runs and returns the exit status.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            e.exit_code()
        }
    }
}

pub fn error_line(e: &MgaError) -> String {
    format!(
        "error code={} exit={} message={}",
        e.code_name(),
        e.exit_code(),
        serde_json::to_string(&e.to_string()).expect("string serializes")
    )
}

pub fn execute(cli: &Cli) -> Result<()> {
    let run = &cli.run;
    match &cli.command {
        Command::Synth { n } => cmd_synth(run, *n),
        Command::Train { manifest } => cmd_train(run, manifest),
        Command::Eval {
            manifest,
            predictions,
            models,
        } => match predictions {
            Some(p) => cmd_eval_predictions(run, p),
            None => cmd_eval(run, manifest.as_deref().expect("clap requires one"), models.as_deref()),
        },
        Command::Infer { manifest, model } => cmd_infer(run, manifest, model),
        Command::GeoExtract { manifest } => cmd_geo_extract(run, manifest),
        Command::Cam {
            manifest,
            head,
            class,
            rows,
        } => cmd_cam(run, manifest, head, class.as_deref(), rows),
        Command::Params { reference } => cmd_params(run, *reference),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| MgaError::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| MgaError::io(path, e))
}

/// Copies the user's config file next to the artifacts it produced.
fn copy_config(run: &RunConfig, dir: &Path) -> Result<()> {
    if let Some(src) = &run.config {
        create_dir(dir)?;
        let dst = dir.join("config.toml");
        std::fs::copy(src, &dst).map_err(|e| MgaError::io(src, e))?;
    }
    Ok(())
}

pub fn train_config(run: &RunConfig) -> Result<TrainConfig> {
    let mut cfg = match &run.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::desk(),
    };
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_stages(s: &str) -> Result<Vec<usize>> {
    match s {
        "all" => Ok(vec![1, 2, 3, 4]),
        _ => match s.parse::<usize>() {
            Ok(k @ 1..=4) => Ok(vec![k]),
            _ => Err(MgaError::Config(format!("--stage must be 1, 2, 3, 4 or all, got {s:?}"))),
        },
    }
}

pub fn parse_folds(s: &str, k: usize) -> Result<Vec<usize>> {
    if s == "all" {
        return Ok((0..k).collect());
    }
    match s.parse::<usize>() {
        Ok(f) if f < k => Ok(vec![f]),
        _ => Err(MgaError::Config(format!("--fold must be `all` or an index below {k}, got {s:?}"))),
    }
}

pub fn fold_dir(out: &Path, fold: usize) -> PathBuf {
    out.join(format!("fold{fold}"))
}

/// Train and test records of one fold.
fn split(records: &[SampleRecord], cfg: &TrainConfig, fold: usize) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    let folds = make_folds(records, cfg.folds, cfg.seed)?;
    let (train, test) = folds.train_test(fold)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect();
    Ok((pick(&train), pick(&test)))
}

fn cmd_synth(run: &RunConfig, n: Option<usize>) -> Result<()> {
    let mut cfg = match &run.config {
        Some(p) => SynthConfig::from_toml(&std::fs::read_to_string(p).map_err(|e| MgaError::io(p, e))?)?,
        None => SynthConfig {
            seed: DEFAULT_SEED,
            ..SynthConfig::default()
        },
    };
    if let Some(n) = n {
        cfg.samples = n;
    }
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let records = generate_synthetic(&cfg)?;
    create_dir(&run.out)?;
    let path = run.out.join(MANIFEST_NAME);
    save_manifest(&path, &records)?;
    copy_config(run, &run.out)?;
    println!("wrote {} samples to {}", records.len(), path.display());
    Ok(())
}

fn cmd_train(run: &RunConfig, manifest: &Path) -> Result<()> {
    let cfg = train_config(run)?;
    let stages = parse_stages(&run.stage)?;
    let records = load_manifest(manifest)?;
    for fold in parse_folds(&run.fold, cfg.folds)? {
        let (train, _) = split(&records, &cfg, fold)?;
        let layout = RunLayout::new(fold_dir(&run.out, fold));
        for &stage in &stages {
            let report = run_stage(stage, &cfg, &train, &layout)?;
            for h in &report.histories {
                println!(
                    "fold {fold} {:<14} loss {:.4} -> {:.4}",
                    h.label,
                    h.first().unwrap_or(f64::NAN),
                    h.last().unwrap_or(f64::NAN)
                );
            }
        }
        copy_config(run, &layout.dir)?;
    }
    Ok(())
}

fn parse_models(models: Option<&str>) -> Result<Vec<ModelKind>> {
    match models {
        None => Ok(ModelKind::ALL.to_vec()),
        Some(list) => list
            .split(',')
            .map(|s| ModelKind::parse(s.trim()).ok_or_else(|| MgaError::Config(format!("unknown model {s:?}"))))
            .collect(),
    }
}

fn truths(records: &[SampleRecord]) -> Vec<Truth> {
    records
        .iter()
        .map(|r| Truth {
            age: r.age,
            gender: r.gender,
        })
        .collect()
}

fn summary_line(label: &str, r: &EvalReport) -> String {
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
    format!(
        "{label} n={} gender={:.2} young={} adult={} elder={} mae={} exact={} one_off={}",
        r.samples,
        r.gender_accuracy,
        pct(r.young.accuracy),
        pct(r.adult.accuracy),
        pct(r.elder.accuracy),
        pct(r.mae),
        pct(r.exact),
        pct(r.one_off)
    )
}

/// Per-fold reports go to `{out}/fold{k}/eval.{model}.json`; the aggregate,
/// computed over the pooled held-out predictions, to `{out}/eval.{model}.json`.
fn cmd_eval(run: &RunConfig, manifest: &Path, models: Option<&str>) -> Result<()> {
    let cfg = train_config(run)?;
    let records = load_manifest(manifest)?;
    let folds = parse_folds(&run.fold, cfg.folds)?;
    let explicit = models.is_some();
    for kind in parse_models(models)? {
        let mut pooled_preds = Vec::new();
        let mut pooled_truths = Vec::new();
        for &fold in &folds {
            let layout = RunLayout::new(fold_dir(&run.out, fold));
            let store = match layout.load_stage(kind.required_stage()) {
                Ok(s) => s,
                Err(MgaError::State(_)) if !explicit => continue,
                Err(e) => return Err(e),
            };
            let (_, test) = split(&records, &cfg, fold)?;
            let preds = predict(kind, &cfg, &store, &prepare(&test, &cfg)?)?;
            let t = truths(&test);
            let report = compute_metrics(&preds, &t, &cfg.groups)?;
            write(&layout.dir.join(format!("eval.{}.json", kind.name())), &report.to_json())?;
            println!("{}", summary_line(&format!("fold{fold} {}", kind.name()), &report));
            pooled_preds.extend(preds);
            pooled_truths.extend(t);
        }
        if pooled_preds.is_empty() {
            continue;
        }
        let report = compute_metrics(&pooled_preds, &pooled_truths, &cfg.groups)?;
        write(&run.out.join(format!("eval.{}.json", kind.name())), &report.to_json())?;
        println!("{}", summary_line(&format!("aggregate {}", kind.name()), &report));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PredictionRow {
    age: f64,
    gender: usize,
    pred_age: Option<f64>,
    pred_female: f64,
}

/// Scores a CSV of precomputed predictions against its truth columns.
fn cmd_eval_predictions(run: &RunConfig, path: &Path) -> Result<()> {
    let cfg = train_config(run)?;
    let mut reader = csv::Reader::from_path(path).map_err(|e| MgaError::Data(format!("{}: {e}", path.display())))?;
    let mut preds = Vec::new();
    let mut truth = Vec::new();
    for (i, row) in reader.deserialize::<PredictionRow>().enumerate() {
        let row = row.map_err(|e| MgaError::Data(format!("{} row {}: {e}", path.display(), i + 2)))?;
        let gender = Gender::from_index(row.gender)
            .ok_or_else(|| MgaError::Data(format!("{} row {}: gender must be 0 or 1", path.display(), i + 2)))?;
        let mut p = Prediction::gender_only(&[1.0 - row.pred_female, row.pred_female]);
        p.age = row.pred_age;
        preds.push(p);
        truth.push(Truth { age: row.age, gender });
    }
    let report = compute_metrics(&preds, &truth, &cfg.groups)?;
    create_dir(&run.out)?;
    write(&run.out.join("eval.predictions.json"), &report.to_json())?;
    println!("{}", summary_line("predictions", &report));
    Ok(())
}

fn single_fold(run: &RunConfig, cfg: &TrainConfig) -> Result<usize> {
    match parse_folds(&run.fold, cfg.folds)?.as_slice() {
        [f] => Ok(*f),
        _ => Err(MgaError::Config("this subcommand takes a single --fold".into())),
    }
}

fn cmd_infer(run: &RunConfig, manifest: &Path, model: &str) -> Result<()> {
    let cfg = train_config(run)?;
    let kind = ModelKind::parse(model).ok_or_else(|| MgaError::Config(format!("unknown model {model:?}")))?;
    let layout = RunLayout::new(fold_dir(&run.out, single_fold(run, &cfg)?));
    let store = layout.load_stage(kind.required_stage())?;
    let records = load_manifest(manifest)?;
    let preds = predict(kind, &cfg, &store, &prepare(&records, &cfg)?)?;
    for (r, p) in records.iter().zip(&preds) {
        let line = serde_json::json!({ "image": r.image_ref, "prediction": p });
        println!("{line}");
    }
    Ok(())
}

/// Writes `{out}/features.csv`: image reference followed by the feature values.
fn cmd_geo_extract(run: &RunConfig, manifest: &Path) -> Result<()> {
    let cfg = train_config(run)?;
    let records = load_manifest(manifest)?;
    let mut text = String::new();
    for r in &records {
        let f = build_feature(&r.landmarks, &cfg.arch.geometry)?;
        text.push_str(&r.image_ref);
        for v in &f.vector {
            text.push(',');
            text.push_str(&v.to_string());
        }
        text.push('\n');
    }
    create_dir(&run.out)?;
    let path = run.out.join("features.csv");
    write(&path, &text)?;
    println!("wrote {} feature vectors to {}", records.len(), path.display());
    Ok(())
}

fn cmd_cam(run: &RunConfig, manifest: &Path, head: &str, class: Option<&str>, rows: &[usize]) -> Result<()> {
    let cfg = train_config(run)?;
    let head = CamHead::parse(head).ok_or_else(|| MgaError::Config(format!("unknown CAM head {head:?}")))?;
    let layout = RunLayout::new(fold_dir(&run.out, single_fold(run, &cfg)?));
    let store = layout.load_stage(head.required_stage())?;
    let records = load_manifest(manifest)?;
    let prepared = prepare(&records, &cfg)?;
    let dir = layout.dir.join("cam");
    for &row in rows {
        let sample = prepared
            .get(row)
            .ok_or_else(|| MgaError::Config(format!("row {row} out of range for {} records", records.len())))?;
        let class = match class {
            None => sample.gender,
            Some("male") => 0,
            Some("female") => 1,
            Some(other) => return Err(MgaError::Config(format!("class must be male or female, got {other:?}"))),
        };
        let (h, w) = (sample.record.image.height(), sample.record.image.width());
        let image = crate::nn::Tensor::new(&[cfg.arch.in_channels, h, w], sample.record.image.to_planar(cfg.arch.in_channels)?)?;
        let cam = compute_cam(&cfg.arch, &store, &image, class, head)?;
        let stem = format!("row{row}.{}.{}", head.name(), Gender::from_index(class).expect("class index"));
        export_cam(&cam, &dir, &stem)?;
        println!(
            "{} {}x{} min={:.6} max={:.6}",
            dir.join(format!("{stem}.pgm")).display(),
            cam.upsampled.height,
            cam.upsampled.width,
            cam.upsampled.min(),
            cam.upsampled.max()
        );
    }
    Ok(())
}

/// Trainable parameter counts per network and for the full model.
pub fn parameter_counts(cfg: &TrainConfig) -> Vec<(&'static str, usize)> {
    let store = Networks::new(cfg).init_store(cfg.seed);
    vec![
        ("can", store.count_trainable(&["can."])),
        ("dgn", store.count_trainable(&["dgn."])),
        ("in.head", store.count_trainable(&["in.head"])),
        ("experts", store.count_trainable(&["mga.expert"])),
        ("total", store.count_trainable(&[])),
    ]
}

fn cmd_params(run: &RunConfig, reference: bool) -> Result<()> {
    let mut cfg = train_config(run)?;
    if reference {
        cfg.arch = crate::models::ArchConfig::reference();
    }
    println!("image {}x{}", cfg.arch.image_size, cfg.arch.image_size);
    for (name, n) in parameter_counts(&cfg) {
        println!("{name} {n}");
    }
    Ok(())
}
