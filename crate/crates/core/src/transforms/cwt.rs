use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::{fft, fft_complex, ifft_real, next_pow2};
use super::wavelet::{natural_length, wavelet_samples, WaveletBasis};
use crate::error::{ensure, Result};
use crate::signal::Waveform;

/// Real CWT coefficients, one row per scale, one column per `hop` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalogram {
    pub coefficients: Vec<Vec<f64>>,
    /// Scales in samples.
    pub scales: Vec<f64>,
    pub hop: usize,
    pub basis: String,
    pub signal_len: usize,
    pub sample_rate: u32,
}

impl Scalogram {
    pub fn n_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn n_times(&self) -> usize {
        self.coefficients.first().map_or(0, Vec::len)
    }

    /// Peak frequency in Hz of each row for the given basis.
    pub fn frequencies(&self, basis: &dyn WaveletBasis) -> Vec<f64> {
        self.scales
            .iter()
            .map(|a| basis.center_frequency() / a * self.sample_rate as f64)
            .collect()
    }

    pub fn magnitude(&self) -> Vec<Vec<f64>> {
        self.coefficients
            .iter()
            .map(|row| row.iter().map(|c| c.abs()).collect())
            .collect()
    }
}

/// `a_k = a0 * ratio^k` for `k in 0..n`.
pub fn geometric_scales(a0: f64, ratio: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a0 * ratio.powi(k as i32)).collect()
}

/// FFT-based linear convolution of `x` with `kernel`, full length.
fn convolve_full(x: &[f64], kernel: &[f64]) -> Result<Vec<f64>> {
    let full = x.len() + kernel.len() - 1;
    let n = next_pow2(full);
    let mut xa: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    xa.resize(n, Complex64::default());
    let mut ka: Vec<Complex64> = kernel.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    ka.resize(n, Complex64::default());
    fft_complex(&mut xa)?;
    fft_complex(&mut ka)?;
    for (a, b) in xa.iter_mut().zip(&ka) {
        *a *= b;
    }
    let mut out = ifft_real(&xa)?;
    out.truncate(full);
    Ok(out)
}

/// Continuous wavelet transform with zero-padded boundaries.
///
/// `coefficients[s][t] = Σ_k ψ_s[k] · x[t·hop + k − c_s]` where `ψ_s` is the
/// unit-norm wavelet at `scales[s]` and `c_s` its centre index.
pub fn cwt(
    w: &Waveform,
    scales: &[f64],
    basis: &dyn WaveletBasis,
    hop: usize,
) -> Result<Scalogram> {
    ensure!(!scales.is_empty(), "cwt needs at least one scale");
    ensure!(hop > 0, "cwt hop must be positive");
    let x = w.samples();
    let n_times = x.len().div_ceil(hop);
    let coefficients = scales
        .iter()
        .map(|&a| {
            let n = natural_length(basis, a);
            let psi = wavelet_samples(basis, a, n)?;
            let centre = (n - 1) / 2;
            let reversed: Vec<f64> = psi.iter().rev().copied().collect();
            let conv = convolve_full(x, &reversed)?;
            // conv[p] with p = t + (n - 1 - centre) is the correlation at t.
            let offset = n - 1 - centre;
            Ok((0..n_times).map(|t| conv[t * hop + offset]).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(Scalogram {
        coefficients,
        scales: scales.to_vec(),
        hop,
        basis: basis.name().to_string(),
        signal_len: x.len(),
        sample_rate: w.sample_rate(),
    })
}

/// `∫₀^∞ |Ψ(ξ)|² / ξ dξ` for the unit-norm mother wavelet, by summation
/// over the spectrum of a finely sampled copy.
pub fn admissibility_constant(basis: &dyn WaveletBasis) -> Result<f64> {
    let scale = 32.0;
    let n = natural_length(basis, scale);
    let psi = wavelet_samples(basis, scale, n)?;
    let n_fft = next_pow2(n * 16);
    let mut padded = psi;
    padded.resize(n_fft, 0.0);
    let spec = fft(&padded)?;
    let d_omega = 2.0 * std::f64::consts::PI / n_fft as f64;
    // |Ψ(aω)|² = |D_a(ω)|² / a and ∫|Ψ(aω)|²/ω dω = C_ψ.
    let c = (1..=n_fft / 2)
        .map(|k| spec[k].norm_sqr() / scale / (k as f64 * d_omega) * d_omega)
        .sum();
    Ok(c)
}

/// Inverse CWT over a geometric scale grid.
///
/// `x̂[n] = (Δln a / C_ψ) Σ_s (hop / a_s) Σ_t S[s][t] ψ_s[n − t·hop + c_s]`,
/// the discretized form of the continuous inverse with measure `da/a²`.
/// A single scale cannot define `Δln a`; it is taken as 1 and the result is
/// only a lossy band-pass approximation.
pub fn icwt(s: &Scalogram, basis: &dyn WaveletBasis) -> Result<Waveform> {
    ensure!(!s.scales.is_empty(), "icwt needs at least one scale");
    ensure!(
        s.coefficients.len() == s.scales.len(),
        "scalogram has {} rows for {} scales",
        s.coefficients.len(),
        s.scales.len()
    );
    ensure!(s.hop > 0, "icwt hop must be positive");
    let d_log_a = if s.scales.len() == 1 {
        log::warn!("icwt with a single scale is a lossy band-pass reconstruction");
        1.0
    } else {
        let ratios: Vec<f64> = s.scales.windows(2).map(|p| p[1] / p[0]).collect();
        let r = ratios[0];
        ensure!(r > 1.0, "icwt scales must increase geometrically");
        ensure!(
            ratios.iter().all(|q| (q / r - 1.0).abs() < 1e-6),
            "icwt scales must form a geometric progression"
        );
        r.ln()
    };
    let c_psi = admissibility_constant(basis)?;
    let len = s.signal_len;
    let mut out = vec![0.0; len];
    for (row, &a) in s.coefficients.iter().zip(&s.scales) {
        let n = natural_length(basis, a);
        let psi = wavelet_samples(basis, a, n)?;
        let centre = (n - 1) / 2;
        let mut upsampled = vec![0.0; len];
        for (t, &c) in row.iter().enumerate() {
            if let Some(slot) = upsampled.get_mut(t * s.hop) {
                *slot = c;
            }
        }
        let conv = convolve_full(&upsampled, &psi)?;
        let gain = d_log_a * s.hop as f64 / (a * c_psi);
        for (o, &v) in out.iter_mut().zip(&conv[centre..centre + len]) {
            *o += gain * v;
        }
    }
    Waveform::new(out, s.sample_rate)
}
