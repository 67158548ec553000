mod common;

use common::{conv_theorem_error, fft_oracle_errors, parseval_rel_err, rng, uniform};
use proptest::prelude::*;
use s3fnet::fft::{irfft2, rfft2};

#[test]
fn every_size_up_to_nine_matches_literal_dft() {
    for h in 1..=9 {
        for w in 1..=9 {
            let (fwd, back) = fft_oracle_errors(h, w, (h * 10 + w) as u64);
            assert!(fwd < 1e-10, "{h}x{w}: forward err {fwd:e}");
            assert!(back < 1e-10, "{h}x{w}: roundtrip err {back:e}");
            let p = parseval_rel_err(h, w, 7 + (h * 10 + w) as u64);
            assert!(p < 1e-9, "{h}x{w}: Parseval err {p:e}");
        }
    }
}

#[test]
fn batched_planes_transform_independently() {
    let x = uniform(&[3, 2, 5, 6], -1.0, 1.0, &mut rng(3));
    let s = rfft2(&x).unwrap();
    assert_eq!(s.shape(), &[3, 2, 5, 4]);
    let one = x.slice(&[1..2, 1..2, 0..5, 0..6]).unwrap();
    let s1 = rfft2(&one).unwrap();
    let plane = 5 * 4;
    assert_eq!(&s.data()[3 * plane..4 * plane], s1.data());
    assert!(irfft2(&s, 6).unwrap().max_abs_diff(&x).unwrap() < 1e-12);
}

#[test]
fn convolution_theorem() {
    for n in [8, 16] {
        for seed in 0..20 {
            let e = conv_theorem_error(n, seed);
            assert!(e < 1e-8, "{n}x{n} seed {seed}: {e:e}");
        }
    }
    // odd sizes hit the mixed-radix path
    assert!(conv_theorem_error(7, 1) < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_sizes(h in 1usize..=9, w in 1usize..=9, seed in any::<u64>()) {
        let (fwd, back) = fft_oracle_errors(h, w, seed);
        prop_assert!(fwd < 1e-10);
        prop_assert!(back < 1e-10);
        prop_assert!(parseval_rel_err(h, w, seed) < 1e-9);
    }

    #[test]
    fn linearity(seed in any::<u64>(), a in -3.0f64..3.0) {
        let mut r = rng(seed);
        let x = uniform(&[4, 6], -1.0, 1.0, &mut r);
        let y = uniform(&[4, 6], -1.0, 1.0, &mut r);
        let lhs = rfft2(&x.scale(a).add(&y).unwrap()).unwrap();
        let rhs = rfft2(&x).unwrap().scale(a).add(&rfft2(&y).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }
}
