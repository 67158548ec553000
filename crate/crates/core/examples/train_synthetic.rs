//! Trains one model family on a synthetic task and prints the epoch log.
//!
//! ```text
//! cargo run --release --example train_synthetic -- s3f-concat conjunction 10
//! ```

use s3fnet::data::{generate_synthetic, split, SynthTaskSpec};
use s3fnet::models::{family_spec, ArchConfig, Model, ModelFamily};
use s3fnet::train::{train_loop, TrainConfig};

fn main() -> s3fnet::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let family: ModelFamily = args.first().map_or("s3f-concat", String::as_str).parse()?;
    let task = args.get(1).map_or("conjunction", String::as_str).parse()?;
    let epochs = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);

    let data = generate_synthetic(&SynthTaskSpec {
        task,
        per_class: 400,
        seed,
        ..SynthTaskSpec::default()
    })?;
    let parts = split(&data, &[0.7, 0.15, 0.15], seed)?;
    let arch = ArchConfig {
        widths: vec![8, 16, 16, 32],
        ..ArchConfig::default()
    };
    let spec = family_spec(family, data.image_shape(), data.n_classes(), &arch, seed)?;
    let mut model = Model::new(spec)?;
    let cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let report = train_loop(&mut model, &parts[0], &parts[1], &cfg, None)?;
    for r in &report.history {
        println!(
            "epoch {:>3}  loss {:.4}  val acc {:.4}  val f1 {:.4}",
            r.epoch, r.train_loss, r.val_accuracy, r.val_weighted_f1
        );
    }
    let (_, test) = s3fnet::train::evaluate(&model, &parts[2], &vec![1.0; data.n_classes()], 128)?;
    println!(
        "best epoch {}  test accuracy {:.4}  ({:.1}s)",
        report.best_epoch,
        test.accuracy,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
