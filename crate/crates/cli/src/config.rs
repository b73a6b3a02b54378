//! `key = value` settings file. Every key is optional; command-line flags
//! take precedence, and `WAVESCOPE_SEED` takes precedence over the file's seed.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

pub const SEED_ENV: &str = "WAVESCOPE_SEED";

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    pub pipeline: Option<String>,
    pub f1: Option<usize>,
    pub nb_f: Option<usize>,
    pub stride: Option<usize>,
    pub hidden: Option<usize>,
    pub sr: Option<u32>,
    pub n_mfcc: Option<usize>,
    pub clip_seconds: Option<f64>,
    pub lr: Option<f64>,
    pub decay: Option<f64>,
    pub epochs_per_decay: Option<usize>,
    pub epochs: Option<usize>,
    pub patience: Option<usize>,
    pub min_delta: Option<f64>,
    pub batch_size: Option<usize>,
    pub vote_clip_seconds: Option<f64>,
    pub cm: Option<f64>,
    pub mode: Option<String>,
    pub epsilon: Option<f64>,
    pub smooth_window: Option<usize>,
    pub wavelet: Option<String>,
    pub n_scales: Option<usize>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Flag, then environment, then file, then `default`.
    pub fn seed(&self, flag: Option<u64>, default: u64) -> Result<u64> {
        if let Some(s) = flag {
            return Ok(s);
        }
        if let Ok(v) = std::env::var(SEED_ENV) {
            return v
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer"));
        }
        Ok(self.seed.unwrap_or(default))
    }
}
