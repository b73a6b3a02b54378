use wavescope::signal::synth::{generate, write_dataset, SynthConfig};
use wavescope::signal::{load_manifest, read_wav, resample, split_clips, write_wav, Waveform};
use wavescope::transforms::power_spectrum;

#[test]
fn synthetic_dataset_round_trips_through_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        per_class: 10,
        seconds: 0.25,
        seed: 3,
        ..SynthConfig::default()
    };
    let clips = generate(&cfg).unwrap();
    write_dataset(dir.path(), &clips).unwrap();
    let index = load_manifest(dir.path().join("metadata.csv"), dir.path()).unwrap();
    assert_eq!(index.len(), 30);
    assert_eq!(index.folds().len(), 10);
    for entry in &index.entries {
        let clip = clips
            .iter()
            .find(|c| c.file_name == entry.file_name)
            .unwrap();
        assert_eq!(entry.class_id, clip.class_id);
        assert_eq!(entry.fold, clip.fold);
        let w = read_wav(&entry.path).unwrap();
        assert_eq!(w.sample_rate(), 8000);
        for (a, b) in w.samples().iter().zip(clip.waveform.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0 + 1e-12);
        }
    }
}

#[test]
fn synthetic_classes_peak_in_their_bands() {
    let clips = generate(&SynthConfig {
        per_class: 3,
        seed: 9,
        ..SynthConfig::default()
    })
    .unwrap();
    let centers = [400.0, 1200.0, 3000.0];
    for clip in &clips {
        let spec = power_spectrum(clip.waveform.samples());
        let bin_hz = 8000.0 / (2 * (spec.len() - 1)) as f64;
        let band_energy = |c: f64| -> f64 {
            spec.iter()
                .enumerate()
                .filter(|(k, _)| ((*k as f64 * bin_hz) - c).abs() <= 0.15 * c)
                .map(|(_, p)| p)
                .sum()
        };
        let best = (0..3)
            .max_by(|&a, &b| band_energy(centers[a]).total_cmp(&band_energy(centers[b])))
            .unwrap();
        assert_eq!(best, clip.class_id, "{}", clip.file_name);
    }
}

#[test]
fn resampled_wav_keeps_duration() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tone.wav");
    let x: Vec<f64> = (0..44100)
        .map(|n| 0.4 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 44100.0).sin())
        .collect();
    write_wav(&path, &Waveform::new(x, 44100).unwrap()).unwrap();
    let w = resample(&read_wav(&path).unwrap(), 8000).unwrap();
    assert_eq!(w.sample_rate(), 8000);
    assert!((w.duration_secs() - 1.0).abs() < 1e-3);
    let clips = split_clips(&w, 0.5).unwrap();
    assert_eq!(clips.len(), 2);
}

#[test]
fn unreadable_files_are_reported_with_path() {
    let err = read_wav("/nonexistent/dir/x.wav").unwrap_err();
    assert!(err.to_string().contains("x.wav"), "{err}");
}
