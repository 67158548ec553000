//! Half-plane 2-D FFT: forward transform, inverse, and energy check.

use s3fnet::fft::{half_width, irfft2, rfft2};
use s3fnet::Tensor;

fn main() -> s3fnet::Result<()> {
    let (h, w) = (6, 7);
    let x = Tensor::from_fn(&[h, w], |i| ((i * 7919) % 23) as f64 / 23.0 - 0.5);
    let spec = rfft2(&x)?;
    println!("{h}x{w} input -> {}x{} complex half spectrum", spec.height(), half_width(w));
    println!("DC term {:.6} (sum of inputs {:.6})", spec.data()[0].re, x.data().iter().sum::<f64>());

    let back = irfft2(&spec, w)?;
    println!("roundtrip max error {:.2e}", back.max_abs_diff(&x)?);

    // Columns 1..ceil(w/2) stand for a conjugate pair in the full plane.
    let wh = half_width(w);
    let mut energy = 0.0;
    for (k, c) in spec.data().iter().enumerate() {
        let v = k % wh;
        let twice = v != 0 && !(w % 2 == 0 && v == w / 2);
        energy += c.norm_sqr() * if twice { 2.0 } else { 1.0 };
    }
    let direct: f64 = x.data().iter().map(|v| v * v).sum();
    println!("Parseval: sum x^2 = {direct:.9}, sum |X|^2 / HW = {:.9}", energy / (h * w) as f64);
    Ok(())
}
