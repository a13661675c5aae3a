//! Generates a small synthetic dataset, writes it as a manifest with PPM
//! images, reloads it and prints per-group summaries.
//!
//! cargo run --example synthetic_dataset -- [out_dir] [samples]

use std::path::PathBuf;

use mga::data::{generate_synthetic, load_manifest, make_folds, save_manifest, Gender, SynthConfig};
use mga::groups::{assign_coarse_group, CoarseGroup};

fn main() -> mga::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/synthetic-example".into()));
    let samples = args.next().and_then(|s| s.parse().ok()).unwrap_or(60);
    let cfg = SynthConfig {
        samples,
        ..SynthConfig::default()
    };
    let records = generate_synthetic(&cfg)?;
    std::fs::create_dir_all(&out).map_err(|e| mga::MgaError::io(&out, e))?;
    let manifest = out.join("manifest.csv");
    save_manifest(&manifest, &records)?;
    let reloaded = load_manifest(&manifest)?;
    assert_eq!(reloaded, records, "manifest round trip is exact");
    println!("wrote {} records to {}", records.len(), manifest.display());

    for g in CoarseGroup::ALL {
        let slice: Vec<_> = records
            .iter()
            .filter(|r| assign_coarse_group(r.age).ok() == Some(g))
            .collect();
        let female = slice.iter().filter(|r| r.gender == Gender::Female).count();
        println!(
            "{g:>5}: {:4} samples, appearance strength at group midpoint {:.2}, {female} female",
            slice.len(),
            cfg.appearance.strength(match g {
                CoarseGroup::Young => 10.0,
                CoarseGroup::Adult => 35.0,
                CoarseGroup::Elder => 65.0,
            })
        );
    }
    let folds = make_folds(&records, 5, cfg.seed)?;
    let sizes: Vec<usize> = folds.folds.iter().map(Vec::len).collect();
    println!("subject-exclusive fold sizes: {sizes:?}");
    Ok(())
}
