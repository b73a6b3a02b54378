use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{ensure, Result};
use crate::signal::Waveform;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Complex bins of a real signal together with their frequency spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    pub bin_hz: f64,
}

impl Spectrum {
    /// Spectrum of `w` zero-padded to the next power of two.
    pub fn of(w: &Waveform) -> Spectrum {
        let n = next_pow2(w.len());
        let mut padded = w.samples().to_vec();
        padded.resize(n, 0.0);
        let bins = fft(&padded).expect("power-of-two length");
        Spectrum {
            bins,
            bin_hz: w.sample_rate() as f64 / n as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Direct O(N²) evaluation of the DFT sum.
pub fn dft_naive(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, &v)| {
                    // Reduce the phase index mod n before scaling to keep the
                    // angle small and accurate.
                    let phase = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                    Complex64::from_polar(v, phase)
                })
                .sum()
        })
        .collect()
}

/// In-place forward FFT; the length must be a power of two.
pub fn fft_complex(buf: &mut [Complex64]) -> Result<()> {
    ensure!(
        buf.len().is_power_of_two(),
        "fft length {} is not a power of two",
        buf.len()
    );
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
    Ok(())
}

pub fn fft(x: &[f64]) -> Result<Vec<Complex64>> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_complex(&mut buf)?;
    Ok(buf)
}

/// Normalized inverse FFT, so that `ifft(fft(x)) == x`.
pub fn ifft(bins: &[Complex64]) -> Result<Vec<Complex64>> {
    ensure!(
        bins.len().is_power_of_two(),
        "ifft length {} is not a power of two",
        bins.len()
    );
    let mut buf = bins.to_vec();
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(&mut buf));
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    Ok(buf)
}

/// Real part of [`ifft`].
pub fn ifft_real(bins: &[Complex64]) -> Result<Vec<f64>> {
    Ok(ifft(bins)?.into_iter().map(|c| c.re).collect())
}

/// `|FFT(x)|²` over bins `0..=N/2`, with `x` zero-padded to the next power of two.
pub fn power_spectrum(x: &[f64]) -> Vec<f64> {
    power_spectrum_padded(x, next_pow2(x.len())).expect("padded length is valid")
}

/// `|FFT(x)|²` over bins `0..=n_fft/2` after zero-padding `x` to `n_fft`.
pub fn power_spectrum_padded(x: &[f64], n_fft: usize) -> Result<Vec<f64>> {
    ensure!(
        n_fft >= x.len(),
        "n_fft {n_fft} shorter than signal {}",
        x.len()
    );
    let mut padded = x.to_vec();
    padded.resize(n_fft, 0.0);
    let bins = fft(&padded)?;
    Ok(bins[..=n_fft / 2].iter().map(|c| c.norm_sqr()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn impulse_is_flat() {
        let s = dft_naive(&[1.0, 0.0, 0.0, 0.0]);
        assert!(s
            .iter()
            .all(|c| (c - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn constant_is_dc_only() {
        let s = dft_naive(&[1.0; 4]);
        assert!((s[0] - Complex64::new(4.0, 0.0)).norm() < 1e-12);
        assert!(s[1..].iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn naive_matches_fft_len_64() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(max_abs_diff(&dft_naive(&x), &fft(&x).unwrap()) < 1e-9);
    }

    #[test]
    fn exact_bin_sine_peaks_at_half_n() {
        let n = 256;
        let k = 17;
        let x: Vec<f64> = (0..n)
            .map(|t| (2.0 * PI * k as f64 * t as f64 / n as f64).sin())
            .collect();
        let mags: Vec<f64> = fft(&x).unwrap()[..=n / 2]
            .iter()
            .map(|c| c.norm())
            .collect();
        let peak = mags
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(peak.0, k);
        assert!((peak.1 - n as f64 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn fft_ifft_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
        let back = ifft_real(&fft(&x).unwrap()).unwrap();
        let err = x
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn non_power_of_two_is_rejected() {
        assert!(fft(&[0.0; 3]).is_err());
        assert!(ifft(&[Complex64::new(0.0, 0.0); 6]).is_err());
    }

    #[test]
    fn power_spectrum_shapes() {
        let mut imp = vec![0.0; 64];
        imp[0] = 1.0;
        let flat = power_spectrum(&imp);
        assert_eq!(flat.len(), 33);
        assert!(flat.iter().all(|&p| (p - 1.0).abs() < 1e-12));

        let tone: Vec<f64> = (0..128)
            .map(|t| (2.0 * PI * 8.0 * t as f64 / 128.0).cos())
            .collect();
        let p = power_spectrum(&tone);
        let total: f64 = p.iter().sum();
        assert!(p[8] / total > 0.999);
    }

    #[test]
    fn two_tone_peak_ratio_is_amplitude_ratio_squared() {
        let n = 512;
        let (a1, a2) = (1.0, 0.3);
        let x: Vec<f64> = (0..n)
            .map(|t| {
                let t = t as f64 / n as f64;
                a1 * (2.0 * PI * 20.0 * t).sin() + a2 * (2.0 * PI * 75.0 * t).sin()
            })
            .collect();
        let p = power_spectrum(&x);
        let ratio = p[75] / p[20];
        assert!((ratio - (a2 / a1).powi(2)).abs() < 1e-9, "{ratio}");
    }

    #[test]
    fn spectrum_of_waveform_carries_bin_width() {
        let w = Waveform::zeros(1000, 8000).unwrap();
        let s = Spectrum::of(&w);
        assert_eq!(s.len(), 1024);
        assert!((s.bin_hz - 8000.0 / 1024.0).abs() < 1e-12);
    }
}
