use std::f64::consts::PI;

use nerp_core::forward::{
    fbp_reconstruct, golden_angle_spokes, nudft_forward, radon_forward, simulate, NudftOperator, ParallelBeam,
};
use nerp_core::metrics::psnr;
use nerp_core::phantom::shepp_logan;
use nerp_core::{ImageGrid, LinearOperator, Measurements, SamplingSpec};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

/// Columns `A e_j`, assembled one unit vector at a time.
fn dense_columns(op: &dyn LinearOperator) -> Vec<Vec<f64>> {
    let n = op.image_size() * op.image_size();
    (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            op.apply(&e).unwrap()
        })
        .collect()
}

fn operators_8x8() -> Vec<(&'static str, Box<dyn LinearOperator>)> {
    let coords = golden_angle_spokes(5, 16, 8);
    vec![
        ("radon", Box::new(ParallelBeam::uniform(8, 7, None, 0.5).unwrap())),
        ("radon_unit_pitch", Box::new(ParallelBeam::uniform(8, 4, Some(13), 1.0).unwrap())),
        ("nudft", Box::new(NudftOperator::new(8, &coords).unwrap())),
    ]
}

#[test]
fn adjoint_dot_test_twenty_probes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (name, op) in operators_8x8() {
        for _ in 0..20 {
            let x = random_vec(&mut rng, 64);
            let y = random_vec(&mut rng, op.measurement_len());
            let ax = op.apply(&x).unwrap();
            let aty = op.adjoint(&y).unwrap();
            let rel = (dot(&ax, &y) - dot(&x, &aty)).abs() / (norm(&ax) * norm(&y));
            assert!(rel < 1e-6, "{name}: {rel}");
        }
    }
}

#[test]
fn adjoint_matches_dense_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (name, op) in operators_8x8() {
        let cols = dense_columns(op.as_ref());
        let y = random_vec(&mut rng, op.measurement_len());
        let aty = op.adjoint(&y).unwrap();
        for (j, col) in cols.iter().enumerate() {
            let expect = dot(col, &y);
            assert!((aty[j] - expect).abs() < 1e-10 * (1.0 + expect.abs()), "{name} column {j}");
        }
    }
}

#[test]
fn nudft_matches_dense_dft_matrix() {
    let n = 8;
    let coords = golden_angle_spokes(6, 16, n);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let img = ImageGrid::from_fn_2d(n, n, |_, _| rng.random::<f64>()).unwrap();
    let fast = nudft_forward(&img, &coords).unwrap();
    let scale: f64 = img.values().iter().map(|v| v.abs()).sum();
    for (k, kc) in coords.iter().enumerate() {
        let mut s = Complex64::new(0.0, 0.0);
        for row in 0..n {
            for col in 0..n {
                let px = col as f64 - (n / 2) as f64;
                let py = row as f64 - (n / 2) as f64;
                let phase = -2.0 * PI * (kc[0] * px + kc[1] * py) / n as f64;
                s += img.get(row, col) * Complex64::new(phase.cos(), phase.sin());
            }
        }
        assert!((fast[k] - s).norm() <= 1e-10 * scale, "sample {k}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operators_are_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, op) in operators_8x8() {
            let x = random_vec(&mut rng, 64);
            let z = random_vec(&mut rng, 64);
            let combo: Vec<f64> = x.iter().zip(&z).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = op.apply(&combo).unwrap();
            let ax = op.apply(&x).unwrap();
            let az = op.apply(&z).unwrap();
            let rhs: Vec<f64> = ax.iter().zip(&az).map(|(a, b)| alpha * a + beta * b).collect();
            let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
            prop_assert!(norm(&diff) <= 1e-6 * (1.0 + norm(&rhs)));
        }
    }
}

#[test]
fn noiseless_forward_is_bitwise_repeatable() {
    let img = shepp_logan(32).unwrap();
    for spec in [SamplingSpec::ct(9), SamplingSpec::mri(7)] {
        let a = simulate(&img, &spec).unwrap().to_vector();
        let b = simulate(&img, &spec).unwrap().to_vector();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn seeded_noise_is_reproducible() {
    let img = shepp_logan(32).unwrap();
    for base in [SamplingSpec::ct(9), SamplingSpec::mri(7)] {
        let spec = SamplingSpec {
            noise_sigma: 0.05,
            noise_seed: 3,
            ..base
        };
        let a = simulate(&img, &spec).unwrap();
        assert_eq!(a, simulate(&img, &spec).unwrap());
        let other = SamplingSpec { noise_seed: 4, ..spec };
        assert_ne!(a, simulate(&img, &other).unwrap());
        let clean = simulate(&img, &SamplingSpec { noise_sigma: 0.0, ..spec }).unwrap();
        let diff: Vec<f64> = a.to_vector().iter().zip(clean.to_vector()).map(|(x, y)| x - y).collect();
        let std = (dot(&diff, &diff) / diff.len() as f64).sqrt();
        assert!((std - 0.05).abs() < 0.01, "{std}");
    }
}

fn fbp_psnr(phantom: &ImageGrid, views: usize) -> f64 {
    let n = phantom.shape()[0];
    let sino = radon_forward(phantom, &SamplingSpec::ct(views)).unwrap();
    psnr(&fbp_reconstruct(&sino, &[n, n]).unwrap().clamped(), phantom, 1.0).unwrap()
}

#[test]
fn fbp_reaches_thirty_db_at_180_views() {
    let phantom = shepp_logan(128).unwrap();
    let q = fbp_psnr(&phantom, 180);
    assert!(q >= 30.0, "FBP PSNR {q:.2} dB");
}

#[test]
fn fbp_quality_grows_with_views() {
    let phantom = shepp_logan(128).unwrap();
    let curve: Vec<f64> = [10, 20, 45, 90, 180].iter().map(|&v| fbp_psnr(&phantom, v)).collect();
    for w in curve.windows(2) {
        assert!(w[1] >= w[0], "{curve:?}");
    }
}

#[test]
fn sinogram_shape_follows_sampling() {
    let img = shepp_logan(32).unwrap();
    match simulate(&img, &SamplingSpec::ct(20)).unwrap() {
        Measurements::Sinogram(s) => {
            assert_eq!(s.values.nrows(), 20);
            assert_eq!(s.values.ncols(), nerp_core::forward::default_detector_bins(32, 0.5));
        }
        _ => unreachable!(),
    }
    match simulate(&img, &SamplingSpec::mri(40)).unwrap() {
        Measurements::KSpace(k) => assert_eq!(k.values.len(), 40 * 64),
        _ => unreachable!(),
    }
}
