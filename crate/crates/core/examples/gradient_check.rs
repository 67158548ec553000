//! Compares backpropagated gradients of a full model with central
//! differences of the loss.

use s3fnet::layers::Mode;
use s3fnet::models::{family_spec, ArchConfig, Model, ModelFamily};
use s3fnet::train::cross_entropy;
use s3fnet::Tensor;

const SEED: u64 = 6;

fn main() -> s3fnet::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let family: ModelFamily = args.first().map_or("s3f-concat", String::as_str).parse()?;
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(SEED);
    let arch = ArchConfig {
        widths: vec![4, 4],
        d_s: 5,
        spectral_filters: vec![3, 3],
        summarizer_widths: vec![4],
        funnel_width: 6,
        d_f: 3,
        ..ArchConfig::default()
    };
    let mut model = Model::new(family_spec(family, [8, 8, 1], 3, &arch, seed)?)?;
    let x = Tensor::from_fn(&[3, 8, 8, 1], |i| ((i * 2654435761) % 1000) as f64 / 1000.0);
    let labels = [0, 1, 2];
    let mode = Mode::Train { step: 0 };

    let logits = model.forward(&x, mode)?;
    let (_, g) = cross_entropy(&logits, &labels)?;
    let (grads, _) = model.backward(&g)?;

    let names: Vec<String> = model
        .params()
        .iter()
        .filter(|(_, p)| p.kind.trainable())
        .map(|(n, _)| n.to_string())
        .collect();
    let h = 1e-5;
    println!("{:<48} {:>13} {:>13} {:>9}", "parameter[0]", "analytic", "numeric", "rel err");
    for name in names {
        let orig = model.params().get(&name)?.data()[0];
        let mut loss_at = |v: f64| -> s3fnet::Result<f64> {
            model.params_mut().get_mut(&name)?.data_mut()[0] = v;
            let l = model.forward(&x, mode)?;
            Ok(cross_entropy(&l, &labels)?.0)
        };
        let numeric = (loss_at(orig + h)? - loss_at(orig - h)?) / (2.0 * h);
        model.params_mut().get_mut(&name)?.data_mut()[0] = orig;
        let analytic = grads.get(&name).map_or(0.0, |t| t.data()[0]);
        let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-6);
        println!("{name:<48} {analytic:>13.6e} {numeric:>13.6e} {rel:>9.1e}");
    }
    Ok(())
}
