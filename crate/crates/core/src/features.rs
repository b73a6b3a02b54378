//! MFCC features for the spectral (arch 1) pipeline.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::signal::Waveform;
use crate::transforms::{next_pow2, power_spectrum_padded, Window};

const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub n_mfcc: usize,
    pub n_mels: usize,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub fmin: f64,
    /// `None` means the Nyquist frequency of the input.
    pub fmax: Option<f64>,
}

impl MfccConfig {
    /// 25 ms frames, 10 ms hop, `max(40, 2·n_mfcc)` mel bands over the full band.
    pub fn new(n_mfcc: usize) -> Self {
        Self {
            n_mfcc,
            n_mels: (2 * n_mfcc).max(40),
            frame_ms: 25.0,
            hop_ms: 10.0,
            fmin: 0.0,
            fmax: None,
        }
    }

    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.frame_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        ((self.hop_ms * sample_rate as f64 / 1000.0).round() as usize).max(1)
    }

    pub fn n_frames(&self, n_samples: usize, sample_rate: u32) -> usize {
        let frame = self.frame_len(sample_rate);
        if n_samples < frame || frame == 0 {
            0
        } else {
            (n_samples - frame) / self.hop_len(sample_rate) + 1
        }
    }
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self::new(40)
    }
}

/// MFCCs laid out `[n_mfcc][n_frames]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub values: Vec<Vec<f64>>,
    pub frame_rate: f64,
}

impl FeatureMatrix {
    pub fn n_coefficients(&self) -> usize {
        self.values.len()
    }

    pub fn n_frames(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// Triangular mel filters `[n_mels][n_fft/2 + 1]` with unit peaks.
pub fn mel_filterbank(
    sample_rate: u32,
    n_fft: usize,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<Vec<Vec<f64>>> {
    let nyquist = sample_rate as f64 / 2.0;
    ensure!(n_mels >= 1, "need at least one mel band");
    ensure!(n_fft >= 2, "n_fft must be at least 2");
    ensure!(
        fmax <= nyquist,
        "fmax {fmax} Hz exceeds Nyquist {nyquist} Hz"
    );
    ensure!(fmin >= 0.0 && fmin < fmax, "need 0 <= fmin < fmax");
    let (mel_lo, mel_hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let n_bins = n_fft / 2 + 1;
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let bank = (0..n_mels)
        .map(|m| {
            let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut row: Vec<f64> = (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let up = (f - lo) / (centre - lo);
                    let down = (hi - f) / (hi - centre);
                    up.min(down).max(0.0)
                })
                .collect();
            // Bands narrower than a bin would otherwise be empty.
            if row.iter().all(|&v| v == 0.0) {
                let k = ((centre / bin_hz).round() as usize).min(n_bins - 1);
                row[k] = 1.0;
            }
            row
        })
        .collect();
    Ok(bank)
}

/// Orthonormal DCT-II of `x`, first `n_out` coefficients.
fn dct2_ortho(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Hann frame → power spectrum → mel → `ln(· + 1e-10)` → orthonormal DCT-II.
pub fn mfcc(w: &Waveform, cfg: &MfccConfig) -> Result<FeatureMatrix> {
    let sr = w.sample_rate();
    ensure!(cfg.frame_ms >= 1.0, "frame must be at least 1 ms");
    ensure!(cfg.hop_ms > 0.0, "hop must be positive");
    ensure!(cfg.n_mfcc >= 1, "need at least one coefficient");
    ensure!(
        cfg.n_mfcc <= cfg.n_mels,
        "n_mfcc {} exceeds n_mels {}",
        cfg.n_mfcc,
        cfg.n_mels
    );
    let frame = cfg.frame_len(sr);
    let hop = cfg.hop_len(sr);
    ensure!(
        w.len() >= frame,
        "signal of {} samples shorter than one {frame}-sample frame",
        w.len()
    );
    let n_fft = next_pow2(frame);
    let fmax = cfg.fmax.unwrap_or(sr as f64 / 2.0);
    let bank = mel_filterbank(sr, n_fft, cfg.n_mels, cfg.fmin, fmax)?;
    let window = Window::Hann.coefficients(frame);
    let n_frames = (w.len() - frame) / hop + 1;

    let mut values = vec![vec![0.0; n_frames]; cfg.n_mfcc];
    let mut buf = vec![0.0; frame];
    #[allow(clippy::needless_range_loop)]
    for f in 0..n_frames {
        let chunk = &w.samples()[f * hop..f * hop + frame];
        for ((b, &s), &c) in buf.iter_mut().zip(chunk).zip(&window) {
            *b = s * c;
        }
        let power = power_spectrum_padded(&buf, n_fft)?;
        let log_mel: Vec<f64> = bank
            .iter()
            .map(|row| {
                let e: f64 = row.iter().zip(&power).map(|(a, b)| a * b).sum();
                (e + LOG_FLOOR).ln()
            })
            .collect();
        for (k, c) in dct2_ortho(&log_mel, cfg.n_mfcc).into_iter().enumerate() {
            values[k][f] = c;
        }
    }
    Ok(FeatureMatrix {
        values,
        frame_rate: sr as f64 / hop as f64,
    })
}
