use std::f64::consts::PI;

use crate::error::{ensure, Result};
use crate::registry::Registry;

/// A real continuous mother wavelet.
pub trait WaveletBasis: Send + Sync {
    fn name(&self) -> &'static str;

    /// Mother wavelet value at unit scale.
    fn mother(&self, t: f64) -> f64;

    /// Smooth envelope used to remove any residual mean after sampling.
    fn envelope(&self, t: f64) -> f64 {
        (-0.5 * t * t).exp()
    }

    /// Half-width, in unit-scale time, beyond which the wavelet is negligible.
    fn half_support(&self) -> f64;

    /// Peak response frequency at unit scale, in cycles per unit time.
    /// At scale `a` samples the peak sits at `center_frequency() / a`
    /// cycles per sample.
    fn center_frequency(&self) -> f64;
}

/// Real Morlet wavelet `cos(w0 t) exp(-t²/2)`.
#[derive(Debug, Clone, Copy)]
pub struct Morlet {
    pub omega0: f64,
}

impl Default for Morlet {
    fn default() -> Self {
        Self { omega0: 6.0 }
    }
}

impl WaveletBasis for Morlet {
    fn name(&self) -> &'static str {
        "morlet"
    }

    fn mother(&self, t: f64) -> f64 {
        (self.omega0 * t).cos() * (-0.5 * t * t).exp()
    }

    fn half_support(&self) -> f64 {
        4.0
    }

    fn center_frequency(&self) -> f64 {
        self.omega0 / (2.0 * PI)
    }
}

/// Mexican hat (Ricker) wavelet `(1 - t²) exp(-t²/2)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MexicanHat;

impl WaveletBasis for MexicanHat {
    fn name(&self) -> &'static str {
        "mexican_hat"
    }

    fn mother(&self, t: f64) -> f64 {
        (1.0 - t * t) * (-0.5 * t * t).exp()
    }

    fn half_support(&self) -> f64 {
        5.0
    }

    fn center_frequency(&self) -> f64 {
        std::f64::consts::SQRT_2 / (2.0 * PI)
    }
}

pub fn wavelet_registry() -> Registry<dyn WaveletBasis> {
    let mut reg: Registry<dyn WaveletBasis> = Registry::new("wavelet basis");
    reg.register("morlet", || Box::new(Morlet::default()));
    reg.register("mexican_hat", || Box::new(MexicanHat));
    reg
}

/// Odd sample count covering the wavelet's support at `scale`.
pub fn natural_length(basis: &dyn WaveletBasis, scale: f64) -> usize {
    2 * (basis.half_support() * scale).ceil() as usize + 1
}

/// Samples the wavelet at `scale` (in samples) on `n` points centred at
/// `(n - 1) / 2`, removes any residual mean and normalizes to unit L2 norm.
pub fn wavelet_samples(basis: &dyn WaveletBasis, scale: f64, n: usize) -> Result<Vec<f64>> {
    ensure!(
        scale.is_finite() && scale > 0.0,
        "wavelet scale must be positive, got {scale}"
    );
    ensure!(n >= 1, "wavelet length must be positive");
    let centre = (n - 1) as f64 / 2.0;
    let times: Vec<f64> = (0..n).map(|k| (k as f64 - centre) / scale).collect();
    let mut psi: Vec<f64> = times.iter().map(|&t| basis.mother(t)).collect();
    let env: Vec<f64> = times.iter().map(|&t| basis.envelope(t)).collect();
    let env_sum: f64 = env.iter().sum();
    let mean_correction = psi.iter().sum::<f64>() / env_sum;
    for (p, e) in psi.iter_mut().zip(&env) {
        *p -= mean_correction * e;
    }
    let norm = psi.iter().map(|p| p * p).sum::<f64>().sqrt();
    ensure!(
        norm > 1e-12,
        "{} wavelet degenerates at scale {scale} with {n} samples",
        basis.name()
    );
    psi.iter_mut().for_each(|p| *p /= norm);
    Ok(psi)
}
