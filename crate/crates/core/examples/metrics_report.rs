//! Classification metrics from predicted probabilities.

use s3fnet::train::metrics;
use s3fnet::Tensor;

fn main() -> s3fnet::Result<()> {
    let probs = Tensor::new(
        vec![10, 3],
        vec![
            0.7, 0.2, 0.1, 0.5, 0.4, 0.1, 0.2, 0.5, 0.3, 0.1, 0.8, 0.1, 0.3, 0.6, 0.1, //
            0.4, 0.3, 0.3, 0.1, 0.2, 0.7, 0.2, 0.1, 0.7, 0.1, 0.5, 0.4, 0.3, 0.3, 0.4,
        ],
    )?;
    let labels = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2];
    let m = metrics(&probs, &labels)?;
    println!("accuracy     {:.4}", m.accuracy);
    println!("weighted F1  {:.4}", m.weighted_f1);
    println!("AUC (ovr)    {:.4}", m.auc.unwrap_or(f64::NAN));
    println!("MCC          {:.4}", m.mcc);
    println!("\nconfusion (rows = true class):");
    for row in &m.confusion {
        println!("  {row:?}");
    }
    for (k, c) in m.per_class.iter().enumerate() {
        println!(
            "class {k}: precision {:.3} recall {:.3} F1 {:.3} support {}",
            c.precision, c.recall, c.f1, c.support
        );
    }
    Ok(())
}
