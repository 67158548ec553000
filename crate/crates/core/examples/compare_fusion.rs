//! Trains concatenation fusion and bilinear fusion with and without
//! signed-sqrt normalization under one protocol and prints test accuracy.
//!
//! ```text
//! cargo run --release --example compare_fusion -- 15 0
//! ```

use s3fnet::data::{generate_synthetic, split, SynthTask, SynthTaskSpec};
use s3fnet::models::{family_spec, ArchConfig, Model, ModelFamily};
use s3fnet::train::{evaluate, train_loop, AdamConfig, TrainConfig};

fn main() -> s3fnet::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = args.first().and_then(|s| s.parse().ok()).unwrap_or(15);
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let data = generate_synthetic(&SynthTaskSpec {
        task: SynthTask::Conjunction,
        seed,
        ..SynthTaskSpec::default()
    })?;
    let parts = split(&data, &[0.7, 0.15, 0.15], seed)?;
    let cfg = TrainConfig {
        epochs,
        seed,
        adam: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let variants = [
        ("spatial only", ModelFamily::Spatial, true),
        ("concat", ModelFamily::S3fConcat, true),
        ("bilinear, normalized", ModelFamily::S3fBilinear, true),
        ("bilinear, raw", ModelFamily::S3fBilinear, false),
    ];
    for (label, family, normalize) in variants {
        let arch = ArchConfig {
            widths: vec![8, 16, 16, 32],
            bilinear_normalize: normalize,
            ..ArchConfig::default()
        };
        let mut model = Model::new(family_spec(family, [32, 32, 1], 4, &arch, seed)?)?;
        let start = std::time::Instant::now();
        train_loop(&mut model, &parts[0], &parts[1], &cfg, None)?;
        let (_, m) = evaluate(&model, &parts[2], &[1.0; 4], 128)?;
        println!(
            "{label:<22} test accuracy {:.4}  MCC {:.4}  ({:.0} s)",
            m.accuracy,
            m.mcc,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
