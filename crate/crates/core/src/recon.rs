//! Recovering a waveform from the activations of a first-layer filterbank.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::nn::{FilterBank, Tensor};
use crate::registry::Registry;
use crate::signal::Waveform;
use crate::stats::{l2_norm, moving_average};
use crate::transforms::{fft, ifft_real, next_pow2, power_spectrum_padded};

/// Alignment correlation below which a shift is reported as unreliable.
pub const LOW_CONFIDENCE_CORRELATION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    /// Normalisation constant dividing the summed per-filter inversions of
    /// `spectral_division`. The least-squares solve needs none.
    pub c_m: f64,
    /// Registered reconstructor name.
    pub mode: String,
    /// Ridge term, relative to the largest kernel power `max |W_m(f)|²`.
    pub epsilon: f64,
    /// Centered moving-average window applied to the result and the bases.
    pub smooth_window: usize,
    /// Alignment search radius in samples; `None` uses the kernel length.
    pub align_search: Option<usize>,
    pub max_iter: usize,
    /// Conjugate-gradient stop: residual norm relative to the right-hand side.
    pub tolerance: f64,
    /// Fit one global gain against the reference before measuring error.
    pub auto_gain: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            c_m: 5.5,
            mode: "least_squares".to_string(),
            epsilon: 1e-6,
            smooth_window: 5,
            align_search: None,
            max_iter: 2000,
            tolerance: 1e-10,
            auto_gain: false,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.c_m != 0.0 && self.c_m.is_finite(),
            "C_m must be finite and nonzero"
        );
        ensure!(self.epsilon >= 0.0, "epsilon must be non-negative");
        ensure!(self.max_iter >= 1, "max_iter must be at least 1");
        ensure!(self.tolerance >= 0.0, "tolerance must be non-negative");
        Ok(())
    }
}

/// Unsmoothed output of a reconstructor.
#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub samples: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// One way of undoing the analysis convolution.
pub trait Reconstructor: Send + Sync {
    fn name(&self) -> &'static str;

    /// Recovers an `input_len` signal from raw conv output `acts`
    /// (`[nb_f × out_len]`, biases included).
    fn invert(
        &self,
        acts: &Tensor,
        bank: &FilterBank,
        input_len: usize,
        cfg: &ReconConfig,
    ) -> Result<Inversion>;

    /// Per-filter synthesis atoms over the kernel support, unsmoothed.
    /// Excluded (all-zero) filters get an all-zero atom.
    fn basis(&self, bank: &FilterBank, cfg: &ReconConfig) -> Result<Vec<Vec<f64>>>;
}

pub fn reconstructor_registry() -> Registry<dyn Reconstructor> {
    let mut r: Registry<dyn Reconstructor> = Registry::new("reconstruction mode");
    r.register("least_squares", || Box::new(LeastSquares));
    r.register("spectral_division", || Box::new(SpectralDivision));
    r
}

fn check_bank(bank: &FilterBank) -> Result<()> {
    ensure!(
        bank.in_channels == 1,
        "reconstruction needs a single-input-channel bank, got {} channels",
        bank.in_channels
    );
    Ok(())
}

fn check_acts(acts: &Tensor, bank: &FilterBank, input_len: usize) -> Result<usize> {
    check_bank(bank)?;
    let out_len = bank.out_len(input_len)?;
    ensure!(
        acts.shape() == [bank.out_channels, out_len],
        "activations {:?} do not match bank output [{} × {out_len}] for input length {input_len}",
        acts.shape(),
        bank.out_channels
    );
    Ok(out_len)
}

/// Indices of filters with a nonzero kernel; the others are logged and skipped.
pub fn active_filters(bank: &FilterBank) -> Vec<usize> {
    let (active, zero): (Vec<usize>, Vec<usize>) =
        (0..bank.out_channels).partition(|&m| bank.kernel_row(m).iter().any(|&v| v != 0.0));
    if !zero.is_empty() {
        log::warn!("excluding all-zero filters {zero:?} from reconstruction");
    }
    active
}

fn kernel_fft_len(bank: &FilterBank) -> usize {
    next_pow2(bank.kernel.max(1024))
}

fn peak_power(kernel: &[f64], n_fft: usize) -> Result<f64> {
    Ok(power_spectrum_padded(kernel, n_fft)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Activations with the biases removed.
fn centered(acts: &Tensor, bank: &FilterBank, out_len: usize) -> Vec<f64> {
    let mut y = acts.data().to_vec();
    for (m, row) in y.chunks_mut(out_len).enumerate() {
        row.iter_mut().for_each(|v| *v -= bank.biases[m]);
    }
    y
}

/// Regularised least squares: minimises `‖A x − (S − b)‖² + ε‖x‖²` by
/// conjugate gradients on the normal equations, where `A` is the strided
/// analysis correlation of the whole bank.
#[derive(Debug, Clone, Copy, Default)]
pub struct LeastSquares;

struct Analysis<'a> {
    bank: &'a FilterBank,
    active: Vec<usize>,
    input_len: usize,
    out_len: usize,
}

impl Analysis<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (k, s) = (self.bank.kernel, self.bank.stride);
        for &m in &self.active {
            let w = self.bank.kernel_row(m);
            for (i, out) in y[m * self.out_len..(m + 1) * self.out_len]
                .iter_mut()
                .enumerate()
            {
                *out = w.iter().zip(&x[i * s..i * s + k]).map(|(a, b)| a * b).sum();
            }
        }
    }

    fn apply_adjoint(&self, y: &[f64], x: &mut [f64]) {
        let (k, s) = (self.bank.kernel, self.bank.stride);
        x.iter_mut().for_each(|v| *v = 0.0);
        for &m in &self.active {
            let w = self.bank.kernel_row(m);
            for (i, &g) in y[m * self.out_len..(m + 1) * self.out_len]
                .iter()
                .enumerate()
            {
                for (xv, wv) in x[i * s..i * s + k].iter_mut().zip(w) {
                    *xv += wv * g;
                }
            }
        }
    }

    fn normal(&self, x: &[f64], eps: f64, tmp: &mut [f64], out: &mut [f64]) {
        self.apply(x, tmp);
        self.apply_adjoint(tmp, out);
        for (o, v) in out.iter_mut().zip(x) {
            *o += eps * v;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Reconstructor for LeastSquares {
    fn name(&self) -> &'static str {
        "least_squares"
    }

    fn invert(
        &self,
        acts: &Tensor,
        bank: &FilterBank,
        input_len: usize,
        cfg: &ReconConfig,
    ) -> Result<Inversion> {
        cfg.validate()?;
        let out_len = check_acts(acts, bank, input_len)?;
        let active = active_filters(bank);
        let n_fft = kernel_fft_len(bank);
        let mut max_power = 0.0f64;
        for &m in &active {
            max_power = max_power.max(peak_power(bank.kernel_row(m), n_fft)?);
        }
        let eps = cfg.epsilon * max_power;
        let op = Analysis {
            bank,
            active,
            input_len,
            out_len,
        };

        let y = centered(acts, bank, out_len);
        let mut rhs = vec![0.0; input_len];
        op.apply_adjoint(&y, &mut rhs);
        let rhs_norm = l2_norm(&rhs);
        let mut x = vec![0.0; op.input_len];
        if rhs_norm == 0.0 {
            return Ok(Inversion {
                samples: x,
                converged: true,
                iterations: 0,
            });
        }

        let mut tmp = vec![0.0; bank.out_channels * out_len];
        let mut mp = vec![0.0; input_len];
        let mut r = rhs.clone();
        let mut p = r.clone();
        let mut rs = dot(&r, &r);
        let mut best = (rs.sqrt(), x.clone());
        let target = cfg.tolerance * rhs_norm;
        for iter in 1..=cfg.max_iter {
            op.normal(&p, eps, &mut tmp, &mut mp);
            let curvature = dot(&p, &mp);
            if curvature <= 0.0 || !curvature.is_finite() {
                break;
            }
            let alpha = rs / curvature;
            for i in 0..input_len {
                x[i] += alpha * p[i];
                r[i] -= alpha * mp[i];
            }
            let rs_new = dot(&r, &r);
            if rs_new.sqrt() < best.0 {
                best = (rs_new.sqrt(), x.clone());
            }
            if rs_new.sqrt() <= target {
                return Ok(Inversion {
                    samples: x,
                    converged: true,
                    iterations: iter,
                });
            }
            let beta = rs_new / rs;
            rs = rs_new;
            for i in 0..input_len {
                p[i] = r[i] + beta * p[i];
            }
        }
        log::warn!(
            "conjugate gradient stopped at relative residual {:.3e}",
            best.0 / rhs_norm
        );
        Ok(Inversion {
            samples: best.1,
            converged: false,
            iterations: cfg.max_iter,
        })
    }

    /// Columns of the ridge-regularised pseudo-inverse of the
    /// `[nb_f × f1]` kernel matrix.
    fn basis(&self, bank: &FilterBank, cfg: &ReconConfig) -> Result<Vec<Vec<f64>>> {
        check_bank(bank)?;
        let active = active_filters(bank);
        let n_fft = kernel_fft_len(bank);
        let mut max_power = 0.0f64;
        for &m in &active {
            max_power = max_power.max(peak_power(bank.kernel_row(m), n_fft)?);
        }
        let eps = cfg.epsilon * max_power;
        let k = DMatrix::from_row_slice(bank.out_channels, bank.kernel, &bank.weights);
        let svd = k.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let inv_sigma = svd
            .singular_values
            .map(|s| if s > 0.0 { s / (s * s + eps) } else { 0.0 });
        let pinv = v_t.transpose() * DMatrix::from_diagonal(&inv_sigma) * u.transpose();
        Ok((0..bank.out_channels)
            .map(|m| {
                if active.contains(&m) {
                    pinv.column(m).iter().copied().collect()
                } else {
                    vec![0.0; bank.kernel]
                }
            })
            .collect())
    }
}

/// Per-filter Wiener-style deconvolution: each activation row is
/// zero-stuffed back to the input rate, divided by its kernel response
/// `W_m / (|W_m|² + ε_m)`, and the rows are summed and divided by `C_m`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpectralDivision;

fn inverse_response(kernel: &[f64], n_fft: usize, rel_eps: f64) -> Result<Vec<Complex64>> {
    let mut padded = kernel.to_vec();
    padded.resize(n_fft, 0.0);
    let w = fft(&padded)?;
    let eps = rel_eps * w.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
    Ok(w.into_iter()
        .map(|c| {
            let d = c.norm_sqr() + eps;
            if d > 0.0 {
                c / d
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect())
}

impl Reconstructor for SpectralDivision {
    fn name(&self) -> &'static str {
        "spectral_division"
    }

    fn invert(
        &self,
        acts: &Tensor,
        bank: &FilterBank,
        input_len: usize,
        cfg: &ReconConfig,
    ) -> Result<Inversion> {
        cfg.validate()?;
        let out_len = check_acts(acts, bank, input_len)?;
        let y = centered(acts, bank, out_len);
        let n_fft = next_pow2(input_len + bank.kernel);
        let mut total = vec![Complex64::new(0.0, 0.0); n_fft];
        for m in active_filters(bank) {
            let inv = inverse_response(bank.kernel_row(m), n_fft, cfg.epsilon)?;
            let mut up = vec![0.0; n_fft];
            for (i, &v) in y[m * out_len..(m + 1) * out_len].iter().enumerate() {
                up[i * bank.stride] = v;
            }
            for ((t, u), g) in total.iter_mut().zip(fft(&up)?).zip(inv) {
                *t += u * g;
            }
        }
        let mut samples = ifft_real(&total)?;
        samples.truncate(input_len);
        samples.iter_mut().for_each(|v| *v /= cfg.c_m);
        Ok(Inversion {
            samples,
            converged: true,
            iterations: 1,
        })
    }

    /// Impulse response of each inverse filter over lags `0..f1`.
    fn basis(&self, bank: &FilterBank, cfg: &ReconConfig) -> Result<Vec<Vec<f64>>> {
        check_bank(bank)?;
        let active = active_filters(bank);
        let n_fft = kernel_fft_len(bank);
        (0..bank.out_channels)
            .map(|m| {
                if !active.contains(&m) {
                    return Ok(vec![0.0; bank.kernel]);
                }
                let mut atom =
                    ifft_real(&inverse_response(bank.kernel_row(m), n_fft, cfg.epsilon)?)?;
                atom.truncate(bank.kernel);
                Ok(atom)
            })
            .collect()
    }
}

/// Smoothed per-filter synthesis atoms ("coding basis") for a mode.
pub fn inverse_basis(bank: &FilterBank, cfg: &ReconConfig) -> Result<Vec<Vec<f64>>> {
    let r = reconstructor_registry().get(&cfg.mode)?;
    Ok(r.basis(bank, cfg)?
        .iter()
        .map(|atom| moving_average(atom, cfg.smooth_window))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// `aligned[n] = recovered[n + shift]`.
    pub shift: isize,
    /// Normalised cross-correlation at `shift`.
    pub correlation: f64,
    pub low_confidence: bool,
}

/// Finds the shift within `±search` maximising the cross-correlation of
/// `recovered` against `original`.
pub fn realign(recovered: &[f64], original: &[f64], search: usize) -> Result<Alignment> {
    ensure!(
        !recovered.is_empty() && !original.is_empty(),
        "cannot align empty signals"
    );
    let norm = l2_norm(recovered) * l2_norm(original);
    let search = search as isize;
    let mut best = Alignment {
        shift: 0,
        correlation: f64::NEG_INFINITY,
        low_confidence: true,
    };
    for d in -search..=search {
        let c: f64 = original
            .iter()
            .enumerate()
            .filter_map(|(n, &o)| {
                let j = n as isize + d;
                (j >= 0 && (j as usize) < recovered.len()).then(|| recovered[j as usize] * o)
            })
            .sum();
        let c = if norm > 0.0 { c / norm } else { 0.0 };
        if c > best.correlation {
            best.shift = d;
            best.correlation = c;
        }
    }
    best.low_confidence = best.correlation < LOW_CONFIDENCE_CORRELATION;
    if best.low_confidence {
        log::warn!(
            "alignment correlation {:.3} is low; shift {} is unreliable",
            best.correlation,
            best.shift
        );
    }
    Ok(best)
}

/// `aligned[n] = x[n + shift]`, zero outside the signal.
pub fn apply_shift(x: &[f64], shift: isize) -> Vec<f64> {
    (0..x.len() as isize)
        .map(|n| {
            let j = n + shift;
            if j >= 0 && (j as usize) < x.len() {
                x[j as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// `‖x − x̂‖ / ‖x‖`.
pub fn recon_error(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    ensure!(
        x.len() == x_hat.len(),
        "length mismatch {} vs {}",
        x.len(),
        x_hat.len()
    );
    let norm = l2_norm(x);
    ensure!(norm > 0.0, "reference signal is all zeros");
    let diff: Vec<f64> = x.iter().zip(x_hat).map(|(a, b)| a - b).collect();
    Ok(l2_norm(&diff) / norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconResult {
    pub recovered: Waveform,
    /// Present when a reference waveform was supplied.
    pub alignment: Option<Alignment>,
    pub gain: f64,
    /// Relative L2 error after alignment, when a reference was supplied.
    pub error: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub basis: Vec<Vec<f64>>,
}

/// Inverts raw conv output `acts`, smooths, and when `reference` is given
/// realigns against it and measures the error.
pub fn recover(
    acts: &Tensor,
    bank: &FilterBank,
    input_len: usize,
    sample_rate: u32,
    cfg: &ReconConfig,
    reference: Option<&Waveform>,
) -> Result<ReconResult> {
    cfg.validate()?;
    let r = reconstructor_registry().get(&cfg.mode)?;
    let inv = r.invert(acts, bank, input_len, cfg)?;
    let mut samples = moving_average(&inv.samples, cfg.smooth_window);
    let basis = r
        .basis(bank, cfg)?
        .iter()
        .map(|atom| moving_average(atom, cfg.smooth_window))
        .collect();

    let mut alignment = None;
    let mut gain = 1.0;
    let mut error = None;
    if let Some(reference) = reference {
        ensure!(
            reference.len() == input_len,
            "reference has {} samples, expected {input_len}",
            reference.len()
        );
        let a = realign(
            &samples,
            reference.samples(),
            cfg.align_search.unwrap_or(bank.kernel),
        )?;
        samples = apply_shift(&samples, a.shift);
        if cfg.auto_gain {
            let energy = samples.iter().map(|v| v * v).sum::<f64>();
            if energy > 0.0 {
                gain = dot(&samples, reference.samples()) / energy;
                samples.iter_mut().for_each(|v| *v *= gain);
            }
        }
        error = Some(recon_error(reference.samples(), &samples)?);
        alignment = Some(a);
    }
    let recovered = Waveform::new(samples, sample_rate).map_err(|e| match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("recovered signal: {msg}")),
        other => other,
    })?;
    Ok(ReconResult {
        recovered,
        alignment,
        gain,
        error,
        converged: inv.converged,
        iterations: inv.iterations,
        basis,
    })
}

/// Runs `original` through the bank and recovers it from the activations.
pub fn reconstruct(
    original: &Waveform,
    bank: &FilterBank,
    cfg: &ReconConfig,
) -> Result<ReconResult> {
    check_bank(bank)?;
    let acts = bank.forward(&Tensor::from_signal(original.samples()))?;
    recover(
        &acts,
        bank,
        original.len(),
        original.sample_rate(),
        cfg,
        Some(original),
    )
}
