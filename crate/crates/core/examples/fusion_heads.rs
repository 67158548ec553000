//! The two fusion operators on a pair of small vectors.

use s3fnet::fusion::{bilinear_fuse, concat_fuse, signed_sqrt_l2};
use s3fnet::Tensor;

fn show(label: &str, t: &Tensor) {
    let vals: Vec<String> = t.data().iter().map(|v| format!("{v:+.3}")).collect();
    println!("{label:<22} {:?} [{}]", t.shape(), vals.join(" "));
}

fn main() -> s3fnet::Result<()> {
    let v_s = Tensor::new(vec![1, 3], vec![0.9, 0.0, -0.4])?;
    let v_f = Tensor::new(vec![1, 2], vec![2.0, -0.5])?;
    show("spatial vector", &v_s);
    show("spectral vector", &v_f);
    show("concat", &concat_fuse(&v_s, &v_f)?);
    let raw = bilinear_fuse(&v_s, &v_f, false)?;
    show("outer product", &raw);
    let n = signed_sqrt_l2(&raw)?;
    show("signed sqrt + L2", &n);
    println!("norm after normalization {:.12}", n.data().iter().map(|v| v * v).sum::<f64>().sqrt());
    show("scaled input, normed", &bilinear_fuse(&v_s.scale(10.0), &v_f, true)?);
    Ok(())
}
