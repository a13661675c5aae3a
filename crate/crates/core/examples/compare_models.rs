//! Trains the four-stage schedule on a synthetic dataset and prints gender
//! accuracy per age group for every model variant.
//!
//! cargo run --release --example compare_models -- [samples] [seed]

use std::time::Instant;

use mga::data::{generate_synthetic, SynthConfig};
use mga::experiment::compare_models;
use mga::pipeline::{ModelKind, TrainConfig};

fn main() -> mga::Result<()> {
    let mut args = std::env::args().skip(1);
    let samples = args.next().and_then(|s| s.parse().ok()).unwrap_or(3000);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let synth = SynthConfig {
        samples,
        seed,
        ..SynthConfig::default()
    };
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::desk()
    };
    let start = Instant::now();
    let records = generate_synthetic(&synth)?;
    let cmp = compare_models(&records, &cfg, 0)?;
    println!(
        "{} train / {} test samples, {:.1}s",
        cmp.train_samples,
        cmp.test_samples,
        start.elapsed().as_secs_f64()
    );
    for stage in &cmp.stages {
        for h in &stage.histories {
            println!(
                "  {:<13} loss {:.4} -> {:.4}",
                h.label,
                h.first().unwrap_or(f64::NAN),
                h.last().unwrap_or(f64::NAN)
            );
        }
    }
    let fmt = |v: Option<f64>| v.map_or("   -".to_string(), |x| format!("{x:5.1}"));
    println!("model      total  young  adult  elder    MAE");
    for kind in ModelKind::ALL {
        let r = cmp.report(kind);
        println!(
            "{:<9} {:6.1} {} {} {} {}",
            kind.name(),
            r.gender_accuracy,
            fmt(r.young.accuracy),
            fmt(r.adult.accuracy),
            fmt(r.elder.accuracy),
            fmt(r.mae)
        );
    }
    Ok(())
}
