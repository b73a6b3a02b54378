//! Synthetic band-pass noise datasets for desk-scale experiments.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{write_wav, Waveform};
use crate::error::{ensure, Error, Result};
use crate::transforms::{ifft, next_pow2};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub sample_rate: u32,
    pub seconds: f64,
    /// Centre frequencies in Hz; when `classes` differs from their count the
    /// centres are spread geometrically between the first and last entry.
    pub centers: Vec<f64>,
    /// Gaussian spectral width as a fraction of the centre frequency.
    pub relative_bandwidth: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            per_class: 100,
            sample_rate: 8000,
            seconds: 1.0,
            centers: vec![400.0, 1200.0, 3000.0],
            relative_bandwidth: 0.08,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn class_centers(&self) -> Vec<f64> {
        if self.centers.len() == self.classes {
            return self.centers.clone();
        }
        let lo = self.centers.first().copied().unwrap_or(400.0);
        let hi = self.centers.last().copied().unwrap_or(3000.0);
        if self.classes == 1 {
            return vec![lo];
        }
        (0..self.classes)
            .map(|i| lo * (hi / lo).powf(i as f64 / (self.classes - 1) as f64))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthClip {
    pub file_name: String,
    pub class_id: usize,
    pub class_name: String,
    pub fold: u8,
    pub waveform: Waveform,
}

/// Gaussian-shaped band of noise around `center_hz` with RMS `rms`.
pub fn bandpass_noise(
    rng: &mut impl Rng,
    len: usize,
    sample_rate: u32,
    center_hz: f64,
    bandwidth_hz: f64,
    rms: f64,
) -> Result<Waveform> {
    ensure!(len > 0, "noise length must be positive");
    ensure!(bandwidth_hz > 0.0, "bandwidth must be positive");
    let n = next_pow2(len);
    let bin_hz = sample_rate as f64 / n as f64;
    let mut bins = vec![Complex64::default(); n];
    for k in 1..n / 2 {
        let f = k as f64 * bin_hz;
        let gain = (-0.5 * ((f - center_hz) / bandwidth_hz).powi(2)).exp();
        if gain < 1e-6 {
            continue;
        }
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        bins[k] = Complex64::new(re, im) * gain;
        bins[n - k] = bins[k].conj();
    }
    let mut samples: Vec<f64> = ifft(&bins)?.into_iter().take(len).map(|c| c.re).collect();
    let cur = (samples.iter().map(|s| s * s).sum::<f64>() / len as f64).sqrt();
    if cur > 0.0 {
        samples.iter_mut().for_each(|s| *s *= rms / cur);
    }
    Waveform::new(samples, sample_rate)
}

/// Generates the clips in memory. Folds are assigned round-robin over 1..10
/// within each class, so every fold is class-balanced.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthClip>> {
    ensure!(
        cfg.classes >= 1 && cfg.classes <= 10,
        "classes must be in 1..=10"
    );
    ensure!(cfg.per_class >= 1, "per_class must be positive");
    let centers = cfg.class_centers();
    let nyquist = cfg.sample_rate as f64 / 2.0;
    ensure!(
        centers.iter().all(|&c| c > 0.0 && c < nyquist),
        "class centres must lie in (0, {nyquist}) Hz"
    );
    let len = (cfg.seconds * cfg.sample_rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut clips = Vec::with_capacity(cfg.classes * cfg.per_class);
    for (class_id, &center) in centers.iter().enumerate() {
        for i in 0..cfg.per_class {
            let rms = rng.random_range(0.05..0.25);
            let waveform = bandpass_noise(
                &mut rng,
                len,
                cfg.sample_rate,
                center,
                cfg.relative_bandwidth * center,
                rms,
            )?;
            clips.push(SynthClip {
                file_name: format!("synth-{class_id}-{i:04}.wav"),
                class_id,
                class_name: format!("band_{}hz", center.round() as u64),
                fold: (i % 10) as u8 + 1,
                waveform,
            });
        }
    }
    Ok(clips)
}

/// Writes `dir/fold{k}/*.wav` plus `dir/metadata.csv` in the UrbanSound8K
/// column layout.
pub fn write_dataset(dir: impl AsRef<Path>, clips: &[SynthClip]) -> Result<()> {
    let dir = dir.as_ref();
    let io = |path: &Path, source| Error::Path {
        path: path.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let meta_path = dir.join("metadata.csv");
    let mut meta = fs::File::create(&meta_path).map_err(|e| io(&meta_path, e))?;
    writeln!(
        meta,
        "slice_file_name,fsID,start,end,salience,fold,classID,class"
    )?;
    for clip in clips {
        let fold_dir = dir.join(format!("fold{}", clip.fold));
        fs::create_dir_all(&fold_dir).map_err(|e| io(&fold_dir, e))?;
        write_wav(fold_dir.join(&clip.file_name), &clip.waveform)?;
        writeln!(
            meta,
            "{},0,0,{},1,{},{},{}",
            clip.file_name,
            clip.waveform.duration_secs(),
            clip.fold,
            clip.class_id,
            clip.class_name
        )?;
    }
    Ok(())
}
