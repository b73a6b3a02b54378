use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::fft::{next_pow2, power_spectrum_padded};
use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Hamming,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / n as f64;
                match self {
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

/// Short-time power spectra, one row per frame.
///
/// Frames start every `hop` samples and only fully-contained frames are
/// kept, so there are `(len - window_len) / hop + 1` of them. Each row has
/// `n_fft / 2 + 1` bins where `n_fft` is `window_len` rounded up to a power
/// of two.
pub fn stft(x: &[f64], window_len: usize, hop: usize, window: Window) -> Result<Vec<Vec<f64>>> {
    ensure!(hop > 0, "stft hop must be positive");
    ensure!(window_len > 0, "stft window must be non-empty");
    ensure!(
        window_len <= x.len(),
        "stft window {window_len} longer than signal {}",
        x.len()
    );
    let n_fft = next_pow2(window_len);
    let coeffs = window.coefficients(window_len);
    let n_frames = (x.len() - window_len) / hop + 1;
    let mut frame = vec![0.0; window_len];
    (0..n_frames)
        .map(|f| {
            let start = f * hop;
            for ((dst, &s), &c) in frame
                .iter_mut()
                .zip(&x[start..start + window_len])
                .zip(&coeffs)
            {
                *dst = s * c;
            }
            power_spectrum_padded(&frame, n_fft)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_definition() {
        let x = vec![0.0; 1000];
        for &(win, hop) in &[(256, 128), (100, 7), (1000, 1), (64, 64)] {
            let s = stft(&x, win, hop, Window::Hann).unwrap();
            assert_eq!(s.len(), (1000 - win) / hop + 1);
            assert_eq!(s[0].len(), next_pow2(win) / 2 + 1);
        }
    }

    #[test]
    fn constant_signal_energy_in_dc_only() {
        let x = vec![0.7; 2048];
        let s = stft(&x, 256, 128, Window::Rectangular).unwrap();
        for row in &s {
            assert!(row[0] > 1.0);
            assert!(row[1..].iter().all(|&p| p < 1e-18 * row[0]));
        }
    }

    #[test]
    fn chirp_peak_moves_up() {
        let sr = 8000.0;
        let n = 16000;
        // Instantaneous frequency f(t) = 100 + 1500 t Hz over 2 s.
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / sr;
                (2.0 * PI * (100.0 * t + 750.0 * t * t)).sin()
            })
            .collect();
        let s = stft(&x, 512, 512, Window::Hann).unwrap();
        let peaks: Vec<usize> = s
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0
            })
            .collect();
        assert!(peaks.windows(2).all(|w| w[1] > w[0]), "{peaks:?}");
        // Frame centres line up with the analytic instantaneous frequency.
        for (f, &bin) in peaks.iter().enumerate() {
            let t = (f * 512 + 256) as f64 / sr;
            let expected = (100.0 + 1500.0 * t) / (sr / 512.0);
            assert!(
                (bin as f64 - expected).abs() <= 1.5,
                "frame {f}: {bin} vs {expected}"
            );
        }
    }

    #[test]
    fn zero_hop_is_rejected() {
        assert!(stft(&[0.0; 10], 4, 0, Window::Hann).is_err());
        assert!(stft(&[0.0; 3], 4, 1, Window::Hann).is_err());
    }
}
