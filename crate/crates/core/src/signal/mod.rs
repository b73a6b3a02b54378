//! Audio signals: the [`Waveform`] carrier, WAV I/O, resampling,
//! fixed-length clipping and the dataset manifest.

mod manifest;
mod resample;
pub mod synth;
mod wav;

pub use manifest::{load_manifest, DatasetEntry, DatasetIndex};
pub use resample::{resample, RESAMPLER_TAPS};
pub use wav::{read_wav, write_wav, write_wav_f32};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Mono audio samples with their sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        ensure!(sample_rate > 0, "sample rate must be positive");
        ensure!(
            !samples.is_empty(),
            "waveform must hold at least one sample"
        );
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("sample {i} is {}", samples[i])));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false for a constructed waveform; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.len() as f64).sqrt()
    }
}

fn seconds_to_len(seconds: f64, sample_rate: u32) -> Result<usize> {
    ensure!(
        seconds.is_finite() && seconds > 0.0,
        "duration must be positive, got {seconds}"
    );
    let len = (seconds * sample_rate as f64).round() as usize;
    ensure!(len >= 1, "duration {seconds}s rounds to zero samples");
    Ok(len)
}

/// Truncates at the end or zero-pads at the end to exactly `seconds`.
pub fn clip_or_pad(w: &Waveform, seconds: f64) -> Result<Waveform> {
    let target = seconds_to_len(seconds, w.sample_rate)?;
    let mut samples = w.samples.clone();
    samples.resize(target, 0.0);
    Waveform::new(samples, w.sample_rate)
}

/// Cuts `w` into contiguous, non-overlapping clips of `clip_seconds` each.
pub fn split_clips(w: &Waveform, clip_seconds: f64) -> Result<Vec<Waveform>> {
    let clip_len = seconds_to_len(clip_seconds, w.sample_rate)?;
    ensure!(
        w.len().is_multiple_of(clip_len),
        "clip length {clip_len} does not divide waveform length {}",
        w.len()
    );
    w.samples
        .chunks_exact(clip_len)
        .map(|c| Waveform::new(c.to_vec(), w.sample_rate))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_waveforms() {
        assert!(Waveform::new(vec![], 8000).is_err());
        assert!(Waveform::new(vec![0.0], 0).is_err());
        assert!(matches!(
            Waveform::new(vec![0.0, f64::NAN], 8000),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn pads_short_input_with_trailing_zeros() {
        let w = Waveform::new(vec![1.0; 3 * 100], 100).unwrap();
        let out = clip_or_pad(&w, 4.0).unwrap();
        assert_eq!(out.len(), 400);
        assert!(out.samples()[..300].iter().all(|&s| s == 1.0));
        assert!(out.samples()[300..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn truncates_long_input_at_end() {
        let samples: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let w = Waveform::new(samples.clone(), 100).unwrap();
        let out = clip_or_pad(&w, 4.0).unwrap();
        assert_eq!(out.samples(), &samples[..400]);
    }

    #[test]
    fn exact_length_is_unchanged() {
        let w = Waveform::new((0..400).map(|i| (i as f64).sin()).collect(), 100).unwrap();
        assert_eq!(clip_or_pad(&w, 4.0).unwrap(), w);
    }

    #[test]
    fn splits_four_seconds_into_one_second_clips() {
        let w = Waveform::zeros(32000, 8000).unwrap();
        let clips = split_clips(&w, 1.0).unwrap();
        assert_eq!(clips.len(), 4);
        assert!(clips.iter().all(|c| c.len() == 8000));
    }

    #[test]
    fn whole_duration_clip_is_identity() {
        let w = Waveform::new((0..800).map(|i| i as f64 * 1e-3).collect(), 8000).unwrap();
        let clips = split_clips(&w, 0.1).unwrap();
        assert_eq!(clips, vec![w]);
    }

    #[test]
    fn non_divisible_split_is_contract_error() {
        let w = Waveform::zeros(1000, 100).unwrap();
        assert!(matches!(split_clips(&w, 3.0), Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn clip_or_pad_is_idempotent(len in 1usize..2000, secs in 0.01f64..20.0) {
            let w = Waveform::new((0..len).map(|i| (i as f64 * 0.1).sin()).collect(), 100).unwrap();
            let once = clip_or_pad(&w, secs).unwrap();
            let twice = clip_or_pad(&once, secs).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn split_then_concat_is_identity(n_clips in 1usize..8, clip_len in 1usize..300) {
            let samples: Vec<f64> = (0..n_clips * clip_len).map(|i| (i as f64).cos()).collect();
            let w = Waveform::new(samples.clone(), 1000).unwrap();
            let clips = split_clips(&w, clip_len as f64 / 1000.0).unwrap();
            let joined: Vec<f64> = clips.iter().flat_map(|c| c.samples().to_vec()).collect();
            prop_assert_eq!(joined, samples);
        }
    }
}
