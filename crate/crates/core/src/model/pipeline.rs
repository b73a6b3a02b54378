use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::error::{ensure, Result};
use crate::features::mfcc;
use crate::nn::{Conv1d, Conv2d, Dense, Layer, Sequential, Tensor};
use crate::registry::Registry;
use crate::signal::{clip_or_pad, Waveform};

/// Turns waveforms into network inputs and builds the matching network.
pub trait Pipeline: Send + Sync {
    fn name(&self) -> &'static str;

    fn input_shape(&self, cfg: &ModelConfig) -> Result<Vec<usize>>;

    /// Truncates or zero-pads `w` to the configured duration and converts it.
    fn featurize(&self, cfg: &ModelConfig, w: &Waveform) -> Result<Tensor>;

    fn build(&self, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Sequential>;
}

fn fit_to_model(cfg: &ModelConfig, w: &Waveform) -> Result<Waveform> {
    ensure!(
        w.sample_rate() == cfg.sample_rate,
        "model expects {} Hz input, got {} Hz",
        cfg.sample_rate,
        w.sample_rate()
    );
    if w.len() == cfg.input_len() {
        Ok(w.clone())
    } else {
        clip_or_pad(w, cfg.clip_seconds)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RawPipeline;

impl Pipeline for RawPipeline {
    fn name(&self) -> &'static str {
        "raw"
    }

    fn input_shape(&self, cfg: &ModelConfig) -> Result<Vec<usize>> {
        Ok(vec![1, cfg.input_len()])
    }

    fn featurize(&self, cfg: &ModelConfig, w: &Waveform) -> Result<Tensor> {
        Ok(Tensor::from_signal(fit_to_model(cfg, w)?.samples()))
    }

    fn build(&self, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Sequential> {
        build_raw_model(cfg, rng)
    }
}

/// Log-mel cepstra, standardised per example to zero mean and unit variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct MfccPipeline;

impl Pipeline for MfccPipeline {
    fn name(&self) -> &'static str {
        "mfcc"
    }

    fn input_shape(&self, cfg: &ModelConfig) -> Result<Vec<usize>> {
        let frames = cfg.mfcc_config().n_frames(cfg.input_len(), cfg.sample_rate);
        ensure!(frames >= 1, "clip too short for a single MFCC frame");
        Ok(vec![1, cfg.n_mfcc, frames])
    }

    fn featurize(&self, cfg: &ModelConfig, w: &Waveform) -> Result<Tensor> {
        let feats = mfcc(&fit_to_model(cfg, w)?, &cfg.mfcc_config())?;
        let mut values = feats.values.concat();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let scale = if std > 1e-12 { 1.0 / std } else { 1.0 };
        for v in &mut values {
            *v = (*v - mean) * scale;
        }
        Tensor::new(vec![1, feats.n_coefficients(), feats.n_frames()], values)
    }

    fn build(&self, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Sequential> {
        build_mfcc_model(cfg, rng)
    }
}

pub fn pipeline_registry() -> Registry<dyn Pipeline> {
    let mut r: Registry<dyn Pipeline> = Registry::new("pipeline");
    r.register("raw", || Box::new(RawPipeline));
    r.register("mfcc", || Box::new(MfccPipeline));
    r
}

fn dense_head(rng: &mut ChaCha8Rng, cfg: &ModelConfig, flat: usize) -> Result<Vec<Layer>> {
    Ok(vec![
        Layer::Flatten,
        Layer::Dense(Dense::init(rng, flat, cfg.hidden)?),
        Layer::Relu,
        Layer::Dense(Dense::init(rng, cfg.hidden, cfg.n_classes)?),
    ])
}

/// Raw-waveform network:
/// `Conv1d(f1, nb_f, stride) → ReLU → MaxPool(8) → [Conv1d(5, 2·nb_f) → ReLU →
/// MaxPool(4)] × 2 → Dense(hidden) → ReLU → Dense(n_classes)`.
pub fn build_raw_model(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Sequential> {
    cfg.validate()?;
    let input = vec![1, cfg.input_len()];
    let wide = 2 * cfg.nb_f;
    let mut layers = vec![
        Layer::Conv1d(Conv1d::init(rng, 1, cfg.nb_f, cfg.f1, cfg.stride)?),
        Layer::Relu,
        Layer::MaxPool1d { size: 8 },
        Layer::Conv1d(Conv1d::init(rng, cfg.nb_f, wide, 5, 1)?),
        Layer::Relu,
        Layer::MaxPool1d { size: 4 },
        Layer::Conv1d(Conv1d::init(rng, wide, wide, 5, 1)?),
        Layer::Relu,
        Layer::MaxPool1d { size: 4 },
    ];
    let flat = Sequential::new(input.clone(), layers.clone())?.output_len()?;
    layers.extend(dense_head(rng, cfg, flat)?);
    Sequential::new(input, layers)
}

/// MFCC network: two blocks of `[Conv2d 3×3 → ReLU] × 2 → MaxPool 2×2`
/// followed by the same dense head as the raw model.
pub fn build_mfcc_model(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Sequential> {
    cfg.validate()?;
    let input = MfccPipeline.input_shape(cfg)?;
    let [c1, c2] = cfg.mfcc_channels;
    let mut layers = Vec::new();
    let mut in_ch = 1;
    for out_ch in [c1, c2] {
        layers.push(Layer::Conv2d(Conv2d::init(rng, in_ch, out_ch, 3, 1)?));
        layers.push(Layer::Relu);
        layers.push(Layer::Conv2d(Conv2d::init(rng, out_ch, out_ch, 3, 1)?));
        layers.push(Layer::Relu);
        layers.push(Layer::MaxPool2d { size: 2 });
        in_ch = out_ch;
    }
    let flat = Sequential::new(input.clone(), layers.clone())?.output_len()?;
    layers.extend(dense_head(rng, cfg, flat)?);
    Sequential::new(input, layers)
}
