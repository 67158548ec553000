//! A frequency-domain filter layer set up as a spatial kernel, compared with
//! direct circular convolution, then a band-pass filter built by hand.

use s3fnet::fft::half_width;
use s3fnet::spectral::{spectral_filter_forward, SpectralFilterParams};
use s3fnet::Tensor;

fn circular(x: &Tensor, k: &Tensor, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            for a in 0..n {
                for b in 0..n {
                    out[i * n + j] += x.data()[a * n + b] * k.data()[((i + n - a) % n) * n + (j + n - b) % n];
                }
            }
        }
    }
    out
}

fn main() -> s3fnet::Result<()> {
    let n = 8;
    let x = Tensor::from_fn(&[1, n, n, 1], |i| ((i * 37) % 11) as f64 / 11.0);
    let mut k = Tensor::zeros(&[n, n]);
    k.set(&[0, 0], 0.5);
    k.set(&[0, 1], 0.25);
    k.set(&[n - 1, 0], 0.25);
    let p = SpectralFilterParams::from_spatial_kernel(&k, 1, 1)?;
    let y = spectral_filter_forward(&x, &p)?;
    let want = circular(&Tensor::new(vec![n, n], x.data().to_vec())?, &k, n);
    let err = y.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("spectral layer vs circular convolution: max error {err:.2e}");

    // keep only radial frequency 2 and see what survives
    let wh = half_width(n);
    let mut band = SpectralFilterParams::from_spatial_kernel(&Tensor::zeros(&[n, n]), 1, 1)?;
    for u in 0..n {
        for v in 0..wh {
            let fu = u.min(n - u) as f64;
            if ((fu * fu + (v * v) as f64).sqrt() - 2.0).abs() < 0.5 {
                band.w_real.set(&[0, 0, u, v], 1.0);
            }
        }
    }
    let grating = Tensor::from_fn(&[1, n, n, 1], |i| {
        let (r, c) = ((i / n) as f64, (i % n) as f64);
        (2.0 * std::f64::consts::PI * 2.0 * c / n as f64).sin() + 0.5 * (2.0 * std::f64::consts::PI * 3.0 * r / n as f64).cos()
    });
    let kept = spectral_filter_forward(&grating, &band)?;
    let energy = |t: &Tensor| t.data().iter().map(|v| v * v).sum::<f64>();
    println!(
        "band-pass at radius 2: input energy {:.2}, output energy {:.2} (the 2-cycle grating alone has {:.2})",
        energy(&grating),
        energy(&kept),
        (n * n) as f64 / 2.0
    );
    Ok(())
}
