//! Runs the four training stages one at a time into a run directory. Each
//! stage reads the checkpoint its predecessor wrote, so the stages can also
//! be run from separate processes.
//!
//! cargo run --release --example staged_training -- [run_dir] [samples]

use std::path::PathBuf;

use mga::data::{generate_synthetic, SynthConfig};
use mga::diagnostics::small_config;
use mga::pipeline::{predict, prepare, run_stage, ModelKind, RunLayout};

fn main() -> mga::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "target/staged-training-example".into()));
    let samples = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let mut cfg = small_config();
    cfg.track_objective = true;
    let records = generate_synthetic(&SynthConfig {
        samples,
        image_size: cfg.arch.image_size,
        seed: cfg.seed,
        ..SynthConfig::default()
    })?;
    let layout = RunLayout::new(&dir);

    for stage in 1..=4 {
        let report = run_stage(stage, &cfg, &records, &layout)?;
        for h in &report.histories {
            println!(
                "{:<14} {} epochs, loss {:.4} -> {:.4}",
                h.label,
                h.epochs.len(),
                h.first().unwrap_or(f64::NAN),
                h.last().unwrap_or(f64::NAN)
            );
        }
        if let (Some(a), Some(b)) = (report.objective.first(), report.objective.last()) {
            println!("  end-to-end objective {a:.4} -> {b:.4}");
        }
    }

    let store = layout.load_stage(4)?;
    let prepared = prepare(&records[..5], &cfg)?;
    for (r, p) in records.iter().zip(predict(ModelKind::Mga, &cfg, &store, &prepared)?) {
        println!(
            "{}: true {:?} age {:.0}, predicted female {:.2} age {:.1}",
            r.image_ref,
            r.gender,
            r.age,
            p.gender[1],
            p.age.unwrap_or(f64::NAN)
        );
    }
    println!("checkpoints and loss logs in {}", dir.display());
    Ok(())
}
