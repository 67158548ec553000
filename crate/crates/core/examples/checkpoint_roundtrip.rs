//! Saves a model, loads it back, and shows that a corrupted description is
//! refused.

use s3fnet::models::{family_spec, ArchConfig, Model, ModelFamily};
use s3fnet::Tensor;

fn main() -> s3fnet::Result<()> {
    let arch = ArchConfig {
        widths: vec![8, 16],
        ..ArchConfig::default()
    };
    let model = Model::new(family_spec(ModelFamily::S3fBilinear, [16, 16, 1], 4, &arch, 3)?)?;
    let path = std::env::temp_dir().join("s3f-example.s3f");
    model.save(&path)?;
    let back = Model::load(&path)?;
    let x = Tensor::from_fn(&[2, 16, 16, 1], |i| (i as f64 * 0.01).sin().abs());
    println!(
        "{} tensors, spec hash {}..., identical outputs after reload: {}",
        model.params().len(),
        &model.spec().hash()[..12],
        model.infer(&x)? == back.infer(&x)?
    );

    let mut bytes = std::fs::read(&path).map_err(|e| s3fnet::Error::io(&path, e))?;
    let at = bytes.windows(12).position(|w| w == b"\"n_classes\":").unwrap() + 12;
    bytes[at] = b'5';
    match Model::from_bytes(&bytes) {
        Err(e) => println!("tampered checkpoint rejected: {e}"),
        Ok(_) => println!("tampered checkpoint was accepted"),
    }
    Ok(())
}
