//! Reference classifiers for the raw-waveform and MFCC pipelines, their
//! training loop and checkpoint files.

mod checkpoint;
mod pipeline;
mod train;

pub use checkpoint::{load_filter_bank, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use pipeline::{
    build_mfcc_model, build_raw_model, pipeline_registry, MfccPipeline, Pipeline, RawPipeline,
};
pub use train::{
    train, EarlyStopping, EpochRecord, Example, StopReason, TrainConfig, TrainHistory,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::features::MfccConfig;
use crate::nn::{argmax, Conv1d, Sequential, Tensor};
use crate::signal::Waveform;

/// Architecture family; also the name of the input pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Raw,
    Mfcc,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Raw => "raw",
            Arch::Mfcc => "mfcc",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "raw" => Ok(Arch::Raw),
            "mfcc" => Ok(Arch::Mfcc),
            other => Err(crate::Error::UnknownStrategy {
                kind: "pipeline",
                name: other.to_string(),
                known: "mfcc, raw".to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    /// First-layer kernel length in samples.
    pub f1: usize,
    /// Number of first-layer filters.
    pub nb_f: usize,
    /// First-layer stride.
    pub stride: usize,
    pub n_classes: usize,
    /// Width of the hidden dense layer.
    pub hidden: usize,
    /// Channels of the two convolutional blocks of the MFCC model.
    pub mfcc_channels: [usize; 2],
    pub n_mfcc: usize,
    pub sample_rate: u32,
    /// Model input duration; waveforms are truncated or zero-padded to it.
    pub clip_seconds: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Raw,
            f1: 72,
            nb_f: 32,
            stride: 2,
            n_classes: 10,
            hidden: 128,
            mfcc_channels: [16, 32],
            n_mfcc: 40,
            sample_rate: 8000,
            clip_seconds: 4.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.f1 >= 1, "f1 must be at least 1");
        ensure!(self.nb_f >= 1, "nb_f must be at least 1");
        ensure!(self.stride >= 1, "stride must be at least 1");
        ensure!(self.n_classes >= 2, "need at least two classes");
        ensure!(self.hidden >= 1, "hidden width must be positive");
        ensure!(
            self.mfcc_channels.iter().all(|&c| c >= 1),
            "mfcc channels must be positive"
        );
        ensure!(self.n_mfcc >= 1, "n_mfcc must be at least 1");
        ensure!(self.sample_rate > 0, "sample rate must be positive");
        ensure!(
            self.clip_seconds.is_finite() && self.clip_seconds > 0.0,
            "clip duration must be positive"
        );
        Ok(())
    }

    /// Number of samples in one model input.
    pub fn input_len(&self) -> usize {
        (self.clip_seconds * self.sample_rate as f64).round() as usize
    }

    pub fn mfcc_config(&self) -> MfccConfig {
        MfccConfig::new(self.n_mfcc)
    }
}

/// A network together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub net: Sequential,
}

impl Model {
    /// Builds a freshly initialised model; `seed` fixes the weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let pipeline = pipeline_registry().get(config.arch.name())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = pipeline.build(&config, &mut rng)?;
        Ok(Self { config, net })
    }

    pub fn pipeline(&self) -> Box<dyn Pipeline> {
        pipeline_registry()
            .get(self.config.arch.name())
            .expect("built-in pipelines are always registered")
    }

    pub fn featurize(&self, w: &Waveform) -> Result<Tensor> {
        self.pipeline().featurize(&self.config, w)
    }

    /// Class probabilities for one waveform.
    pub fn predict(&self, w: &Waveform) -> Result<Vec<f64>> {
        self.net.predict_proba(&self.featurize(w)?)
    }

    /// Most probable class; ties go to the lowest class id.
    pub fn predict_class(&self, w: &Waveform) -> Result<usize> {
        Ok(argmax(&self.predict(w)?))
    }

    pub fn predict_batch(&self, batch: &[Waveform]) -> Result<Vec<Vec<f64>>> {
        let pipeline = self.pipeline();
        batch
            .iter()
            .map(|w| {
                self.net
                    .predict_proba(&pipeline.featurize(&self.config, w)?)
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params()
    }

    /// The learned first-layer filterbank of a raw-waveform model.
    pub fn filter_bank(&self) -> Option<&Conv1d> {
        match self.config.arch {
            Arch::Raw => self.net.first_conv1d(),
            Arch::Mfcc => None,
        }
    }

    /// Trains in place on labelled waveforms.
    pub fn fit(&mut self, data: &[(Waveform, usize)], cfg: &TrainConfig) -> Result<TrainHistory> {
        let pipeline = self.pipeline();
        let examples = data
            .iter()
            .map(|(w, label)| {
                Ok(Example {
                    input: pipeline.featurize(&self.config, w)?,
                    label: *label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        train(&mut self.net, &examples, cfg)
    }
}
