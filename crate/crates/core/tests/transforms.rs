use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavescope::signal::Waveform;
use wavescope::transforms::{
    cwt, dft_naive, fft, geometric_scales, icwt, ifft_real, natural_length, stft, wavelet_registry,
    wavelet_samples, Window,
};

#[test]
fn fft_matches_naive_dft_and_inverts() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [1usize, 2, 8, 64, 1024] {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = fft(&x).unwrap();
        for (a, b) in fast.iter().zip(dft_naive(&x)) {
            assert!((a - b).norm() <= 1e-9);
        }
        let back = ifft_real(&fast).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn cwt_coefficients_equal_direct_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = Waveform::new(x.clone(), 8000).unwrap();
    let registry = wavelet_registry();
    for name in registry.names() {
        let basis = registry.get(name).unwrap();
        let scales = [1.5, 4.0, 9.0];
        let s = cwt(&w, &scales, basis.as_ref(), 3).unwrap();
        for (si, &a) in scales.iter().enumerate() {
            let n = natural_length(basis.as_ref(), a);
            let psi = wavelet_samples(basis.as_ref(), a, n).unwrap();
            let c = (n - 1) / 2;
            for t in [0usize, 17, 50, 99] {
                let direct: f64 = (0..n)
                    .filter_map(|k| {
                        let idx = (t * 3 + k) as isize - c as isize;
                        (idx >= 0 && (idx as usize) < x.len()).then(|| psi[k] * x[idx as usize])
                    })
                    .sum();
                assert!(
                    (s.coefficients[si][t] - direct).abs() <= 1e-10,
                    "{name} a={a} t={t}"
                );
            }
        }
    }
}

#[test]
fn stft_tracks_chirp() {
    let sr = 8000.0;
    let x: Vec<f64> = (0..8000)
        .map(|n| {
            let t = n as f64 / sr;
            (2.0 * PI * (200.0 * t + 1500.0 * t * t)).sin()
        })
        .collect();
    let frames = stft(&x, 256, 512, Window::Hann).unwrap();
    assert_eq!(frames.len(), (8000 - 256) / 512 + 1);
    let peaks: Vec<usize> = frames.iter().map(|f| wavescope::nn::argmax(f)).collect();
    assert!(peaks.windows(2).all(|p| p[1] >= p[0]), "{peaks:?}");
    assert!(stft(&x, 256, 0, Window::Hann).is_err());
}

#[test]
fn icwt_of_cwt_on_wav_signal() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 2048;
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut spec = fft(&raw).unwrap();
    for (k, c) in spec.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 / n as f64;
        if !(0.04..=0.12).contains(&f) {
            *c = Default::default();
        }
    }
    let x = ifft_real(&spec).unwrap();
    let w = Waveform::new(x.clone(), 8000).unwrap();
    let morlet = wavelet_registry().get("morlet").unwrap();
    let scales = geometric_scales(2.0, 64f64.powf(1.0 / 63.0), 64);
    let back = icwt(
        &cwt(&w, &scales, morlet.as_ref(), 1).unwrap(),
        morlet.as_ref(),
    )
    .unwrap();
    let err: f64 = x
        .iter()
        .zip(back.samples())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
        / x.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(err <= 0.1, "{err}");
}
