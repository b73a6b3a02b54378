use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavescope::nn::{FilterBank, Tensor};
use wavescope::recon::{inverse_basis, realign, recon_error, reconstruct, recover, ReconConfig};
use wavescope::signal::Waveform;
use wavescope::transforms::power_spectrum_padded;

fn cfg(mode: &str, epsilon: f64) -> ReconConfig {
    ReconConfig {
        c_m: 1.0,
        mode: mode.to_string(),
        epsilon,
        smooth_window: 1,
        max_iter: 5000,
        tolerance: 1e-13,
        ..ReconConfig::default()
    }
}

fn random_bank(rng: &mut impl Rng, nb_f: usize, f1: usize, stride: usize) -> FilterBank {
    let kernels: Vec<Vec<f64>> = (0..nb_f)
        .map(|_| (0..f1).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    FilterBank::from_kernels(&kernels, vec![0.0; nb_f], stride).unwrap()
}

fn random_signal(rng: &mut impl Rng, len: usize) -> Waveform {
    Waveform::new(
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
        8000,
    )
    .unwrap()
}

/// Dense analysis matrix `A` with `A x = conv(x)` for a one-channel bank.
fn dense_operator(bank: &FilterBank, len: usize) -> DMatrix<f64> {
    let out_len = bank.out_len(len).unwrap();
    let mut a = DMatrix::zeros(bank.out_channels * out_len, len);
    for m in 0..bank.out_channels {
        for i in 0..out_len {
            for (k, &w) in bank.kernel_row(m).iter().enumerate() {
                a[(m * out_len + i, i * bank.stride + k)] = w;
            }
        }
    }
    a
}

fn max_kernel_power(bank: &FilterBank) -> f64 {
    (0..bank.out_channels)
        .flat_map(|m| power_spectrum_padded(bank.kernel_row(m), 1024).unwrap())
        .fold(0.0, f64::max)
}

fn dense_ridge_solve(bank: &FilterBank, y: &[f64], len: usize, rel_eps: f64) -> Vec<f64> {
    let a = dense_operator(bank, len);
    let eps = rel_eps * max_kernel_power(bank);
    let normal = a.transpose() * &a + DMatrix::identity(len, len) * eps;
    let rhs = a.transpose() * DVector::from_column_slice(y);
    normal.lu().solve(&rhs).unwrap().iter().copied().collect()
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    d / b.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn full_rank_random_bank_least_squares_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for &(nb_f, f1, stride, len) in &[(8, 16, 2, 256), (6, 24, 3, 384), (32, 72, 2, 512)] {
        let bank = random_bank(&mut rng, nb_f, f1, stride);
        let x = random_signal(&mut rng, len);
        let r = reconstruct(&x, &bank, &cfg("least_squares", 1e-8)).unwrap();
        assert!(
            r.error.unwrap() <= 1e-6,
            "{nb_f}x{f1}/{stride}: {:?}",
            r.error
        );
        assert_eq!(r.alignment.unwrap().shift, 0);

        let y = bank.forward(&Tensor::from_signal(x.samples())).unwrap();
        let dense = dense_ridge_solve(&bank, y.data(), len, 1e-8);
        assert!(rel_diff(r.recovered.samples(), &dense) <= 1e-6);
    }
}

#[test]
fn barely_overdetermined_bank_matches_dense_ridge_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let (len, bank) = (384, random_bank(&mut rng, 4, 24, 3));
    let x = random_signal(&mut rng, len);
    let r = reconstruct(&x, &bank, &cfg("least_squares", 1e-8)).unwrap();
    let y = bank.forward(&Tensor::from_signal(x.samples())).unwrap();
    let dense = dense_ridge_solve(&bank, y.data(), len, 1e-8);
    assert!(rel_diff(r.recovered.samples(), &dense) <= 1e-6);
}

#[test]
fn cg_matches_direct_solve_for_square_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let bank = random_bank(&mut rng, 2, 2, 2);
    let len = 128;
    assert_eq!(2 * bank.out_len(len).unwrap(), len);
    let y: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let acts = Tensor::new(vec![2, len / 2], y.clone()).unwrap();
    let r = recover(&acts, &bank, len, 8000, &cfg("least_squares", 0.0), None).unwrap();
    assert!(r.converged);
    let a = dense_operator(&bank, len);
    let direct: Vec<f64> = a
        .lu()
        .solve(&DVector::from_vec(y))
        .unwrap()
        .iter()
        .copied()
        .collect();
    let err: f64 = r
        .recovered
        .samples()
        .iter()
        .zip(&direct)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-8, "{err}");
}

#[test]
fn recovery_is_linear_in_activations() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let bank = random_bank(&mut rng, 6, 12, 2);
    let len = 200;
    let x = random_signal(&mut rng, len);
    let acts = bank.forward(&Tensor::from_signal(x.samples())).unwrap();
    let alpha = -2.75;
    let scaled = Tensor::new(
        acts.shape().to_vec(),
        acts.data().iter().map(|v| alpha * v).collect(),
    )
    .unwrap();
    for mode in ["least_squares", "spectral_division"] {
        let c = ReconConfig {
            smooth_window: 5,
            ..cfg(mode, 1e-6)
        };
        let a = recover(&acts, &bank, len, 8000, &c, None).unwrap();
        let b = recover(&scaled, &bank, len, 8000, &c, None).unwrap();
        let expected: Vec<f64> = a.recovered.samples().iter().map(|v| alpha * v).collect();
        assert!(rel_diff(b.recovered.samples(), &expected) <= 1e-9, "{mode}");
    }
}

#[test]
fn nested_banks_never_increase_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let full = random_bank(&mut rng, 10, 8, 2);
    let x = random_signal(&mut rng, 160);
    let mut previous = f64::INFINITY;
    for nb_f in 1..=10 {
        let kernels: Vec<Vec<f64>> = (0..nb_f).map(|m| full.kernel_row(m).to_vec()).collect();
        let bank = FilterBank::from_kernels(&kernels, vec![0.0; nb_f], 2).unwrap();
        let y = bank.forward(&Tensor::from_signal(x.samples())).unwrap();
        let dense = dense_ridge_solve(&bank, y.data(), 160, 1e-10);
        let dense_err = recon_error(x.samples(), &dense).unwrap();
        let cg = reconstruct(&x, &bank, &cfg("least_squares", 1e-10)).unwrap();
        assert!((cg.error.unwrap() - dense_err).abs() <= 1e-6, "nb_f {nb_f}");
        assert!(
            dense_err <= previous + 1e-9,
            "nb_f {nb_f}: {dense_err} > {previous}"
        );
        previous = dense_err;
    }
    assert!(previous <= 1e-6);
}

#[test]
fn orthonormal_dft_bank_inverse_is_its_transpose() {
    let n = 8;
    let scale = |k: usize| {
        if k == 0 || k == n / 2 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        }
    };
    let mut rows = Vec::new();
    for k in 0..=n / 2 {
        rows.push(
            (0..n)
                .map(|t| scale(k) * (2.0 * PI * (k * t) as f64 / n as f64).cos())
                .collect::<Vec<_>>(),
        );
    }
    for k in 1..n / 2 {
        rows.push(
            (0..n)
                .map(|t| scale(k) * (2.0 * PI * (k * t) as f64 / n as f64).sin())
                .collect(),
        );
    }
    let bank = FilterBank::from_kernels(&rows, vec![0.0; n], 1).unwrap();
    let basis = inverse_basis(&bank, &cfg("least_squares", 0.0)).unwrap();
    for (b, r) in basis.iter().zip(&rows) {
        for (p, q) in b.iter().zip(r) {
            assert!((p - q).abs() <= 1e-9);
        }
    }
}

#[test]
fn delta_bank_bases_are_deltas() {
    let kernels = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]];
    let bank = FilterBank::from_kernels(&kernels, vec![0.0; 2], 1).unwrap();
    for mode in ["least_squares", "spectral_division"] {
        let basis = inverse_basis(&bank, &cfg(mode, 0.0)).unwrap();
        for (b, k) in basis.iter().zip(&kernels) {
            for (p, q) in b.iter().zip(k) {
                assert!((p - q).abs() <= 1e-12, "{mode}: {b:?}");
            }
        }
    }
}

#[test]
fn zero_filters_are_excluded() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut kernels = vec![vec![0.0; 4]];
    kernels.extend((0..3).map(|_| {
        (0..4)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    }));
    let bank = FilterBank::from_kernels(&kernels, vec![0.0; 4], 1).unwrap();
    let x = random_signal(&mut rng, 64);
    let r = reconstruct(&x, &bank, &cfg("least_squares", 1e-10)).unwrap();
    assert!(r.error.unwrap() <= 1e-6);
    assert!(r.basis[0].iter().all(|&v| v == 0.0));
}

#[test]
fn iteration_cap_returns_best_iterate_flagged() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let bank = random_bank(&mut rng, 4, 16, 2);
    let x = random_signal(&mut rng, 256);
    let c = ReconConfig {
        max_iter: 2,
        ..cfg("least_squares", 1e-8)
    };
    let r = reconstruct(&x, &bank, &c).unwrap();
    assert!(!r.converged);
    assert!(r.error.unwrap() < 1.0);
}

#[test]
fn spectral_division_scales_with_c_m() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let bank = random_bank(&mut rng, 3, 8, 1);
    let x = random_signal(&mut rng, 100);
    let acts = bank.forward(&Tensor::from_signal(x.samples())).unwrap();
    let one = recover(
        &acts,
        &bank,
        100,
        8000,
        &cfg("spectral_division", 1e-6),
        None,
    )
    .unwrap();
    let c = ReconConfig {
        c_m: 5.5,
        ..cfg("spectral_division", 1e-6)
    };
    let five = recover(&acts, &bank, 100, 8000, &c, None).unwrap();
    for (a, b) in one.recovered.samples().iter().zip(five.recovered.samples()) {
        assert!((a / 5.5 - b).abs() <= 1e-12);
    }
}

#[test]
fn independent_noise_alignment_is_low_confidence() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let a = random_signal(&mut rng, 4000);
    let b = random_signal(&mut rng, 4000);
    let al = realign(a.samples(), b.samples(), 72).unwrap();
    assert!(al.correlation.abs() < 0.1);
    assert!(al.low_confidence);
}

#[test]
fn auto_gain_undoes_global_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let bank = random_bank(&mut rng, 3, 8, 1);
    let x = random_signal(&mut rng, 100);
    let c = ReconConfig {
        c_m: 4.0,
        auto_gain: true,
        ..cfg("spectral_division", 1e-9)
    };
    let r = reconstruct(&x, &bank, &c).unwrap();
    assert!(r.gain > 1.0);
    let plain = reconstruct(
        &x,
        &bank,
        &ReconConfig {
            auto_gain: false,
            ..c.clone()
        },
    )
    .unwrap();
    assert!(r.error.unwrap() <= plain.error.unwrap());
}

#[test]
fn invalid_config_is_rejected() {
    let bank = FilterBank::from_kernels(&[vec![1.0]], vec![0.0], 1).unwrap();
    let x = Waveform::new(vec![1.0; 8], 8000).unwrap();
    for bad in [
        ReconConfig {
            c_m: 0.0,
            ..ReconConfig::default()
        },
        ReconConfig {
            epsilon: -1.0,
            ..ReconConfig::default()
        },
    ] {
        assert!(reconstruct(&x, &bank, &bad).is_err());
    }
    let acts = Tensor::new(vec![1, 5], vec![0.0; 5]).unwrap();
    assert!(recover(&acts, &bank, 8, 8000, &ReconConfig::default(), None).is_err());
}
