//! Spectral characterisation of learned first-layer kernels and comparison
//! of their activations against a wavelet scalogram.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::nn::{FilterBank, Tensor};
use crate::signal::Waveform;
use crate::stats::{moving_average, normalize_peak, pearson};
use crate::transforms::{cwt, power_spectrum_padded, Scalogram, WaveletBasis};

pub const DEFAULT_PAD: usize = 1024;

/// Power spectrum of every kernel row, zero-padded to `pad_to` samples.
/// Row `m` has `pad_to / 2 + 1` bins.
pub fn kernel_spectrum(bank: &FilterBank, pad_to: usize) -> Result<Vec<Vec<f64>>> {
    ensure!(
        pad_to.is_power_of_two(),
        "pad length {pad_to} is not a power of two"
    );
    ensure!(
        pad_to >= bank.kernel_row(0).len(),
        "pad length {pad_to} shorter than kernel {}",
        bank.kernel_row(0).len()
    );
    (0..bank.out_channels)
        .map(|m| power_spectrum_padded(bank.kernel_row(m), pad_to))
        .collect()
}

/// Peak frequency and −3 dB bandwidth of one power spectrum.
///
/// `f_c` is the first bin of maximum power; `f_b` counts the contiguous
/// bins around it whose power is at least half the maximum. Returns
/// `None` for an all-zero spectrum.
pub fn estimate_fc_fb(spectrum: &[f64], bin_hz: f64) -> Option<(f64, f64)> {
    let (peak, &max) = spectrum.iter().enumerate().fold(
        None,
        |best: Option<(usize, &f64)>, (i, v)| match best {
            Some((_, b)) if *v <= *b => best,
            _ => Some((i, v)),
        },
    )?;
    if max <= 0.0 || !max.is_finite() {
        return None;
    }
    let half = 0.5 * max;
    let lo = spectrum[..peak]
        .iter()
        .rposition(|&v| v < half)
        .map_or(0, |i| i + 1);
    let hi = spectrum[peak..]
        .iter()
        .position(|&v| v < half)
        .map_or(spectrum.len(), |i| peak + i);
    Some((peak as f64 * bin_hz, (hi - lo) as f64 * bin_hz))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterEstimate {
    pub index: usize,
    /// `None` for an all-zero kernel.
    pub center_hz: Option<f64>,
    pub bandwidth_hz: Option<f64>,
}

/// Least-squares fit of `ln f_c = ln α + β · rank`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub alpha: f64,
    pub beta: f64,
    /// Coefficient of determination; 1 when all frequencies are equal.
    pub r_squared: f64,
    pub n: usize,
}

/// Sorts the positive center frequencies ascending and fits an exponential
/// against their rank. Fewer than three positive values are refused.
pub fn sort_and_fit(center_hz: &[f64]) -> Result<(Vec<f64>, ExpFit)> {
    let mut sorted: Vec<f64> = center_hz.iter().copied().filter(|&f| f > 0.0).collect();
    if sorted.len() < 3 {
        return Err(Error::validation(format!(
            "exponential fit needs at least 3 nonzero center frequencies, got {}",
            sorted.len()
        )));
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let ys: Vec<f64> = sorted.iter().map(|f| f.ln()).collect();
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let beta = sxy / sxx;
    let intercept = y_mean - beta * x_mean;
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    let ss_res: f64 = ys
        .iter()
        .enumerate()
        .map(|(i, y)| (y - intercept - beta * i as f64).powi(2))
        .sum();
    let r_squared = if ss_tot <= f64::EPSILON * ys.len() as f64 * y_mean.abs().max(1.0) {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok((
        sorted,
        ExpFit {
            alpha: intercept.exp(),
            beta,
            r_squared,
            n: ys.len(),
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub sample_rate: u32,
    pub pad_to: usize,
    pub bin_hz: f64,
    pub filters: Vec<FilterEstimate>,
    /// Kernel power spectra, one row per filter.
    pub spectra: Vec<Vec<f64>>,
    /// Filter indices by ascending center frequency; null filters last.
    pub order: Vec<usize>,
    /// `None` when fewer than three filters have a nonzero spectrum.
    pub fit: Option<ExpFit>,
}

impl FilterReport {
    pub fn center_frequencies(&self) -> Vec<f64> {
        self.filters.iter().filter_map(|f| f.center_hz).collect()
    }

    /// Fraction of non-null filters whose center lies within a relative
    /// `tolerance` of any of `targets`.
    pub fn fraction_near(&self, targets: &[f64], tolerance: f64) -> f64 {
        let centers = self.center_frequencies();
        if centers.is_empty() {
            return 0.0;
        }
        let hits = centers
            .iter()
            .filter(|&&f| targets.iter().any(|&t| (f - t).abs() <= tolerance * t))
            .count();
        hits as f64 / centers.len() as f64
    }

    /// Fraction of non-null filters whose center lies below `hz`.
    pub fn fraction_below(&self, hz: f64) -> f64 {
        let centers = self.center_frequencies();
        if centers.is_empty() {
            return 0.0;
        }
        centers.iter().filter(|&&f| f < hz).count() as f64 / centers.len() as f64
    }

    /// Spectra rows in [`FilterReport::order`].
    pub fn sorted_spectra(&self) -> Vec<Vec<f64>> {
        self.order
            .iter()
            .map(|&m| self.spectra[m].clone())
            .collect()
    }

    /// CSV with one row per filter: `index,f_c,f_b`; null estimates are empty.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "f_c", "f_b"])?;
        for f in &self.filters {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([f.index.to_string(), fmt(f.center_hz), fmt(f.bandwidth_hz)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Estimates `f_c`/`f_b` for every kernel of `bank` and fits the sorted
/// center frequencies.
pub fn analyze_bank(bank: &FilterBank, sample_rate: u32, pad_to: usize) -> Result<FilterReport> {
    ensure!(sample_rate > 0, "sample rate must be positive");
    let spectra = kernel_spectrum(bank, pad_to)?;
    let bin_hz = sample_rate as f64 / pad_to as f64;
    let filters: Vec<FilterEstimate> = spectra
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let est = estimate_fc_fb(s, bin_hz);
            FilterEstimate {
                index,
                center_hz: est.map(|e| e.0),
                bandwidth_hz: est.map(|e| e.1),
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..filters.len()).collect();
    order.sort_by(|&a, &b| {
        let key = |i: usize| filters[i].center_hz.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b)).then(a.cmp(&b))
    });
    let centers: Vec<f64> = filters.iter().filter_map(|f| f.center_hz).collect();
    let fit = match sort_and_fit(&centers) {
        Ok((_, fit)) => Some(fit),
        Err(e) => {
            log::warn!("{e}");
            None
        }
    };
    Ok(FilterReport {
        sample_rate,
        pad_to,
        bin_hz,
        filters,
        spectra,
        order,
        fit,
    })
}

/// Absolute first-layer activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationMap {
    /// `[nb_f][out_len]`, non-negative.
    pub values: Vec<Vec<f64>>,
    pub stride: usize,
    pub kernel: usize,
    pub sample_rate: u32,
}

impl ActivationMap {
    pub fn n_columns(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Input sample at the centre of column `i`'s receptive field.
    pub fn column_center(&self, i: usize) -> f64 {
        (i * self.stride) as f64 + (self.kernel as f64 - 1.0) / 2.0
    }

    /// Summed squared activation of each column.
    pub fn column_energy(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.n_columns()];
        for row in &self.values {
            for (acc, v) in e.iter_mut().zip(row) {
                *acc += v * v;
            }
        }
        e
    }
}

/// `|conv(w)|` per filter; with `subtract_bias` the biases are removed
/// first so that silence maps to zero.
pub fn activation_map(
    bank: &FilterBank,
    w: &Waveform,
    subtract_bias: bool,
) -> Result<ActivationMap> {
    ensure!(
        bank.in_channels == 1,
        "activation map needs a single-input-channel bank"
    );
    let out = bank.forward(&Tensor::from_signal(w.samples()))?;
    let out_len = out.shape()[1];
    let values = out
        .data()
        .chunks(out_len)
        .enumerate()
        .map(|(m, row)| {
            let b = if subtract_bias { bank.biases[m] } else { 0.0 };
            row.iter().map(|v| (v - b).abs()).collect()
        })
        .collect();
    Ok(ActivationMap {
        values,
        stride: bank.stride,
        kernel: bank.kernel,
        sample_rate: w.sample_rate(),
    })
}

/// Linear interpolation of `(positions, values)` onto `0..len`, holding the
/// end values outside the sampled range.
fn interpolate(positions: &[f64], values: &[f64], len: usize) -> Vec<f64> {
    let mut j = 0;
    (0..len)
        .map(|n| {
            let t = n as f64;
            if t <= positions[0] {
                return values[0];
            }
            while j + 1 < positions.len() && positions[j + 1] < t {
                j += 1;
            }
            if j + 1 >= positions.len() {
                return values[values.len() - 1];
            }
            let f = (t - positions[j]) / (positions[j + 1] - positions[j]);
            values[j] + f * (values[j + 1] - values[j])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CwtComparison {
    pub activation: ActivationMap,
    pub scalogram: Scalogram,
    /// Per-sample energy envelopes, each scaled to peak 1.
    pub conv_envelope: Vec<f64>,
    pub cwt_envelope: Vec<f64>,
    /// Pearson correlation of the envelopes; `None` when either is flat.
    pub correlation: Option<f64>,
    pub conv_peak_seconds: f64,
    pub cwt_peak_seconds: f64,
}

impl CwtComparison {
    /// CSV columns `time_s,conv,cwt`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let sr = self.activation.sample_rate as f64;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time_s", "conv", "cwt"])?;
        for (n, (a, b)) in self
            .conv_envelope
            .iter()
            .zip(&self.cwt_envelope)
            .enumerate()
        {
            w.write_record([(n as f64 / sr).to_string(), a.to_string(), b.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn argmax_seconds(x: &[f64], sample_rate: u32) -> f64 {
    crate::nn::argmax(x) as f64 / sample_rate as f64
}

/// Runs `w` through the bank and through a CWT, and compares their
/// time-marginal energy, each smoothed over `smooth` samples.
pub fn compare_with_cwt(
    w: &Waveform,
    bank: &FilterBank,
    scales: &[f64],
    basis: &dyn WaveletBasis,
    smooth: usize,
) -> Result<CwtComparison> {
    let activation = activation_map(bank, w, true)?;
    let scalogram = cwt(w, scales, basis, 1)?;

    let positions: Vec<f64> = (0..activation.n_columns())
        .map(|i| activation.column_center(i))
        .collect();
    let conv_energy = interpolate(&positions, &activation.column_energy(), w.len());
    let mut cwt_energy = vec![0.0; w.len()];
    for row in &scalogram.coefficients {
        for (acc, c) in cwt_energy.iter_mut().zip(row) {
            *acc += c * c;
        }
    }
    let conv_envelope = normalize_peak(&moving_average(&conv_energy, smooth));
    let cwt_envelope = normalize_peak(&moving_average(&cwt_energy, smooth));
    let correlation = pearson(&conv_envelope, &cwt_envelope);
    Ok(CwtComparison {
        conv_peak_seconds: argmax_seconds(&conv_envelope, w.sample_rate()),
        cwt_peak_seconds: argmax_seconds(&cwt_envelope, w.sample_rate()),
        activation,
        scalogram,
        conv_envelope,
        cwt_envelope,
        correlation,
    })
}
