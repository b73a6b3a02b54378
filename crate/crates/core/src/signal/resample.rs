use std::f64::consts::PI;

use super::Waveform;
use crate::error::{ensure, Result};

/// Length of the Hann-windowed sinc anti-aliasing filter.
pub const RESAMPLER_TAPS: usize = 64;

/// Cutoff as a fraction of the target sample rate.
const CUTOFF_FRACTION: f64 = 0.45;

fn lowpass_taps(cutoff_cycles_per_sample: f64) -> Vec<f64> {
    let n = RESAMPLER_TAPS;
    let centre = (n - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 - centre;
            let sinc = if t == 0.0 {
                2.0 * cutoff_cycles_per_sample
            } else {
                (2.0 * PI * cutoff_cycles_per_sample * t).sin() / (PI * t)
            };
            let hann = 0.5 - 0.5 * (2.0 * PI * (k as f64 + 0.5) / n as f64).cos();
            sinc * hann
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    taps
}

/// Full linear convolution; output index `n` is delayed by `(taps-1)/2`.
fn filter_full(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len() + taps.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (k, &h) in taps.iter().enumerate() {
            y[i + k] += xi * h;
        }
    }
    y
}

fn lerp_at(y: &[f64], pos: f64) -> f64 {
    if pos <= 0.0 {
        return y[0];
    }
    let i = pos.floor() as usize;
    if i + 1 >= y.len() {
        return y[y.len() - 1];
    }
    let frac = pos - i as f64;
    y[i] * (1.0 - frac) + y[i + 1] * frac
}

/// Changes the sample rate of `w` to `target_sr`.
///
/// Downsampling applies a 64-tap Hann-windowed sinc low-pass (cutoff at 0.45
/// of the target rate) before linear interpolation; the filter's group delay
/// is compensated so output sample `j` corresponds to input time
/// `j * sr / target_sr`.
pub fn resample(w: &Waveform, target_sr: u32) -> Result<Waveform> {
    ensure!(target_sr > 0, "target sample rate must be positive");
    let sr = w.sample_rate();
    if target_sr == sr {
        return Ok(w.clone());
    }
    let ratio = target_sr as f64 / sr as f64;
    let out_len = ((w.len() as f64 * ratio).round() as usize).max(1);

    let (filtered, delay) = if target_sr < sr {
        let taps = lowpass_taps(CUTOFF_FRACTION * ratio);
        let delay = (taps.len() - 1) as f64 / 2.0;
        (filter_full(w.samples(), &taps), delay)
    } else {
        (w.samples().to_vec(), 0.0)
    };

    let step = sr as f64 / target_sr as f64;
    let samples = (0..out_len)
        .map(|j| lerp_at(&filtered, j as f64 * step + delay))
        .collect();
    Waveform::new(samples, target_sr)
}
