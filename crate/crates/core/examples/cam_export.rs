//! Trains the appearance network briefly, then exports class activation maps
//! for a few faces as PGM images with JSON sidecars.
//!
//! cargo run --release --example cam_export -- [out_dir]

use std::path::PathBuf;

use mga::data::{generate_synthetic, SynthConfig};
use mga::eval::{compute_cam, export_cam, CamHead};
use mga::nn::Tensor;
use mga::pipeline::{prepare, TrainConfig, Trainer};

fn main() -> mga::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/cam-example".into()));
    let mut cfg = TrainConfig::desk();
    cfg.stage1.epochs = 3;
    let records = generate_synthetic(&SynthConfig {
        samples: 400,
        ..SynthConfig::default()
    })?;
    let mut trainer = Trainer::new(cfg.clone(), &records)?;
    trainer.run_stage(1)?;

    let prepared = prepare(&records[..4], &cfg)?;
    let s = cfg.arch.image_size;
    for (i, sample) in prepared.iter().enumerate() {
        let image = Tensor::new(&[cfg.arch.in_channels, s, s], sample.record.image.to_planar(cfg.arch.in_channels)?)?;
        for class in 0..2 {
            let cam = compute_cam(&cfg.arch, &trainer.store, &image, class, CamHead::CanGender)?;
            let stem = format!("face{i}.class{class}");
            export_cam(&cam, &out, &stem)?;
            println!(
                "{stem}: raw {}x{}, upsampled {}x{}, range {:.3} .. {:.3}",
                cam.raw.height,
                cam.raw.width,
                cam.upsampled.height,
                cam.upsampled.width,
                cam.upsampled.min(),
                cam.upsampled.max()
            );
        }
    }
    println!("maps written to {}", out.display());
    Ok(())
}
