use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};
use wavescope::analysis::{activation_map, analyze_bank, compare_with_cwt};
use wavescope::eval::{kfold_evaluate, write_report, EvalOptions, Item};
use wavescope::features::{mfcc as compute_mfcc, MfccConfig};
use wavescope::model::{Arch, Checkpoint, Model, ModelConfig, TrainConfig};
use wavescope::nn::FilterBank;
use wavescope::plot::{to_db, write_heatmap, write_lines};
use wavescope::recon::{reconstruct as run_reconstruction, reconstructor_registry, ReconConfig};
use wavescope::signal::synth::{generate, write_dataset, SynthConfig};
use wavescope::signal::{clip_or_pad, load_manifest, read_wav, resample, write_wav_f32, Waveform};
use wavescope::transforms::{cwt, geometric_scales, stft, wavelet_registry, Spectrum, Window};

use crate::config::Settings;
use crate::{
    AnalyzeArgs, DataArgs, EvalArgs, MfccArgs, ModelArgs, Op, ReconstructArgs, SynthArgs,
    TrainArgs, TransformArgs,
};

const PLOT_WIDTH: usize = 1024;
const PLOT_HEIGHT: usize = 320;
const HEATMAP_ROWS: usize = 256;
const DB_FLOOR: f64 = -80.0;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Repeats rows so short matrices still render at a readable height.
fn stretch_rows(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let k = (HEATMAP_ROWS / rows.len().max(1)).max(1);
    rows.into_iter()
        .flat_map(|r| std::iter::repeat_n(r, k))
        .collect()
}

fn write_csv(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Log-spaced scales from 2 samples up to a sixteenth of the signal, capped at 512.
fn default_scales(len: usize, n: usize) -> Vec<f64> {
    let lo = 2.0;
    let hi = (len as f64 / 16.0).clamp(4.0, 512.0);
    let ratio = if n > 1 {
        (hi / lo).powf(1.0 / (n - 1) as f64)
    } else {
        1.0
    };
    geometric_scales(lo, ratio, n.max(1))
}

pub fn transform(a: &TransformArgs, s: &Settings) -> Result<()> {
    let w = read_wav(&a.input)?;
    create_dir(&a.out)?;
    let sr = w.sample_rate() as f64;
    match a.op {
        Op::Fft => {
            let spec = Spectrum::of(&w);
            let half = &spec.bins[..spec.len() / 2 + 1];
            write_csv(
                &a.out.join("fft.csv"),
                &["freq_hz".into(), "magnitude".into(), "phase".into()],
                half.iter().enumerate().map(|(k, c)| {
                    vec![
                        (k as f64 * spec.bin_hz).to_string(),
                        c.norm().to_string(),
                        c.arg().to_string(),
                    ]
                }),
            )?;
            let db = to_db(&[half.iter().map(|c| c.norm_sqr()).collect()], DB_FLOOR).remove(0);
            write_lines(a.out.join("fft.png"), &[&db], PLOT_WIDTH, PLOT_HEIGHT)?;
            info!("{} bins at {:.3} Hz spacing", half.len(), spec.bin_hz);
        }
        Op::Stft => {
            let hop = a.hop.unwrap_or(a.window / 2).max(1);
            let frames = stft(w.samples(), a.window, hop, Window::Hann)?;
            let n_bins = frames[0].len();
            let bin_hz = sr / (2 * (n_bins - 1)).max(1) as f64;
            let mut header = vec!["time_s".to_string()];
            header.extend((0..n_bins).map(|k| format!("{:.2}", k as f64 * bin_hz)));
            write_csv(
                &a.out.join("stft.csv"),
                &header,
                frames.iter().enumerate().map(|(j, f)| {
                    std::iter::once((j * hop) as f64 / sr)
                        .chain(f.iter().copied())
                        .map(|v| v.to_string())
                        .collect()
                }),
            )?;
            let by_freq: Vec<Vec<f64>> = (0..n_bins)
                .rev()
                .map(|k| frames.iter().map(|f| f[k]).collect())
                .collect();
            write_heatmap(
                a.out.join("stft.png"),
                &stretch_rows(to_db(&by_freq, DB_FLOOR)),
                1,
            )?;
            info!("{} frames x {n_bins} bins", frames.len());
        }
        Op::Cwt => {
            let basis = wavelet_registry().get(
                a.wavelet
                    .as_deref()
                    .or(s.wavelet.as_deref())
                    .unwrap_or("morlet"),
            )?;
            let scales = default_scales(w.len(), a.n_scales.or(s.n_scales).unwrap_or(64));
            let hop = a.hop.unwrap_or(8).max(1);
            let sg = cwt(&w, &scales, basis.as_ref(), hop)?;
            let mut header = vec!["scale".to_string(), "freq_hz".to_string()];
            header.extend((0..sg.n_times()).map(|j| format!("{:.5}", (j * hop) as f64 / sr)));
            let freqs = sg.frequencies(basis.as_ref());
            write_csv(
                &a.out.join("cwt.csv"),
                &header,
                sg.coefficients.iter().enumerate().map(|(i, row)| {
                    [sg.scales[i], freqs[i]]
                        .into_iter()
                        .chain(row.iter().copied())
                        .map(|v| v.to_string())
                        .collect()
                }),
            )?;
            let power: Vec<Vec<f64>> = sg
                .magnitude()
                .iter()
                .map(|r| r.iter().map(|v| v * v).collect())
                .collect();
            write_heatmap(
                a.out.join("cwt.png"),
                &stretch_rows(to_db(&power, DB_FLOOR)),
                1,
            )?;
            info!(
                "{} scales x {} times ({})",
                sg.n_scales(),
                sg.n_times(),
                basis.name()
            );
        }
    }
    Ok(())
}

pub fn mfcc(a: &MfccArgs, s: &Settings) -> Result<()> {
    let w = read_wav(&a.input)?;
    let cfg = MfccConfig::new(a.n_mfcc.or(s.n_mfcc).unwrap_or(40));
    let m = compute_mfcc(&w, &cfg)?;
    let mut header = vec!["time_s".to_string()];
    header.extend((0..m.n_coefficients()).map(|i| format!("c{i}")));
    let rows = (0..m.n_frames()).map(|j| {
        std::iter::once(j as f64 / m.frame_rate)
            .chain(m.values.iter().map(|r| r[j]))
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
    });
    match &a.out {
        Some(path) => write_csv(path, &header, rows),
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(&header)?;
            for row in rows {
                w.write_record(&row)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

pub fn synth(a: &SynthArgs, s: &Settings, seed: u64) -> Result<()> {
    let cfg = SynthConfig {
        classes: a.classes,
        per_class: a.per_class,
        sample_rate: a.sr.or(s.sr).unwrap_or(8000),
        seconds: a.seconds,
        seed,
        ..SynthConfig::default()
    };
    let clips = generate(&cfg)?;
    write_dataset(&a.out, &clips)?;
    info!(
        "wrote {} clips of {} s in {} classes centred at {:?} Hz to {}",
        clips.len(),
        cfg.seconds,
        cfg.classes,
        cfg.class_centers()
            .iter()
            .map(|c| c.round())
            .collect::<Vec<_>>(),
        a.out.display()
    );
    Ok(())
}

fn model_config(m: &ModelArgs, s: &Settings, n_classes: usize) -> Result<ModelConfig> {
    let d = ModelConfig::default();
    let arch = match m.pipeline.as_deref().or(s.pipeline.as_deref()) {
        Some(name) => Arch::from_name(name)?,
        None => d.arch,
    };
    let cfg = ModelConfig {
        arch,
        f1: m.f1.or(s.f1).unwrap_or(d.f1),
        nb_f: m.nb_f.or(s.nb_f).unwrap_or(d.nb_f),
        stride: m.stride.or(s.stride).unwrap_or(d.stride),
        hidden: s.hidden.unwrap_or(d.hidden),
        n_mfcc: m.n_mfcc.or(s.n_mfcc).unwrap_or(d.n_mfcc),
        sample_rate: m.sr.or(s.sr).unwrap_or(d.sample_rate),
        clip_seconds: m.clip_seconds.or(s.clip_seconds).unwrap_or(d.clip_seconds),
        n_classes,
        ..d
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(m: &ModelArgs, s: &Settings, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        lr0: m.lr.or(s.lr).unwrap_or(d.lr0),
        decay: s.decay.unwrap_or(d.decay),
        epochs_per_decay: s.epochs_per_decay.unwrap_or(d.epochs_per_decay),
        max_epochs: m.epochs.or(s.epochs).unwrap_or(d.max_epochs),
        patience: m.patience.or(s.patience).unwrap_or(d.patience),
        min_delta: s.min_delta.unwrap_or(d.min_delta),
        batch_size: m.batch_size.or(s.batch_size).unwrap_or(d.batch_size),
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn manifest_path(d: &DataArgs) -> PathBuf {
    d.manifest
        .clone()
        .unwrap_or_else(|| d.data.join("metadata.csv"))
}

/// Reads every manifest entry, resampled to `sample_rate` and fitted to
/// `clip_seconds`. Also returns the class count implied by the labels.
fn load_items(d: &DataArgs, sample_rate: u32, clip_seconds: f64) -> Result<(Vec<Item>, usize)> {
    let index = load_manifest(manifest_path(d), &d.data)?;
    ensure!(!index.is_empty(), "manifest lists no audio");
    let mut items = Vec::with_capacity(index.len());
    for e in &index.entries {
        let w = read_wav(&e.path)?;
        let w = clip_or_pad(&resample(&w, sample_rate)?, clip_seconds)?;
        items.push(Item {
            id: e.file_name.clone(),
            fold: e.fold,
            label: e.class_id,
            waveform: w,
        });
    }
    let n_classes = items.iter().map(|i| i.label).max().unwrap_or(0) + 1;
    info!(
        "loaded {} recordings in {} folds",
        items.len(),
        index.folds().len()
    );
    Ok((items, n_classes.max(2)))
}

/// Loads with sample rate and duration taken from flags or the settings file.
fn load_for(d: &DataArgs, m: &ModelArgs, s: &Settings) -> Result<(Vec<Item>, usize)> {
    let defaults = ModelConfig::default();
    load_items(
        d,
        m.sr.or(s.sr).unwrap_or(defaults.sample_rate),
        m.clip_seconds
            .or(s.clip_seconds)
            .unwrap_or(defaults.clip_seconds),
    )
}

fn accuracy(model: &Model, items: &[&Item]) -> Result<f64> {
    let mut correct = 0;
    for item in items {
        if model.predict_class(&item.waveform)? == item.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / items.len() as f64)
}

pub fn train(a: &TrainArgs, s: &Settings, seed: u64) -> Result<()> {
    let (items, n_classes) = load_for(&a.data, &a.model, s)?;
    let mcfg = model_config(&a.model, s, n_classes)?;
    let tcfg = train_config(&a.model, s, seed)?;
    let (test, train): (Vec<&Item>, Vec<&Item>) =
        items.iter().partition(|i| Some(i.fold) == a.fold_out);
    ensure!(
        !train.is_empty(),
        "no training recordings left after holding out fold {:?}",
        a.fold_out
    );
    if a.fold_out.is_some() && test.is_empty() {
        warn!("held-out fold {:?} has no recordings", a.fold_out);
    }
    let data: Vec<(Waveform, usize)> = train
        .iter()
        .map(|i| (i.waveform.clone(), i.label))
        .collect();
    let mut model = Model::new(mcfg, seed)?;
    info!(
        "training {} model ({} parameters) on {} recordings",
        model.config.arch.name(),
        model.n_params(),
        data.len()
    );
    let history = model.fit(&data, &tcfg)?;
    for (i, e) in history.epochs.iter().enumerate() {
        info!(
            "epoch {:>2}: loss {:.4} acc {:.3} lr {:.2e}",
            i + 1,
            e.loss,
            e.accuracy,
            e.lr
        );
    }
    info!("stopped: {:?}", history.stop_reason);
    if !test.is_empty() {
        println!(
            "fold {} accuracy: {:.4}",
            a.fold_out.unwrap_or_default(),
            accuracy(&model, &test)?
        );
    }
    Checkpoint::new(&model, Some(tcfg), Some(history)).save(&a.out)?;
    info!("saved {}", a.out.display());
    Ok(())
}

pub fn eval(a: &EvalArgs, s: &Settings, seed: u64) -> Result<()> {
    if let Some(ckpt) = &a.ckpt {
        let model = Checkpoint::load(ckpt)?.into_model();
        let (items, _) = load_items(&a.data, model.config.sample_rate, model.config.clip_seconds)?;
        let chosen: Vec<&Item> = items
            .iter()
            .filter(|i| a.folds.as_ref().is_none_or(|f| f.contains(&i.fold)))
            .collect();
        ensure!(!chosen.is_empty(), "no recordings in the selected folds");
        println!(
            "accuracy: {:.4} ({} recordings)",
            accuracy(&model, &chosen)?,
            chosen.len()
        );
        return Ok(());
    }
    if !a.kfold {
        bail!("pass --kfold to cross-validate or --ckpt to score a trained model");
    }
    let (items, n_classes) = load_for(&a.data, &a.model, s)?;
    let mcfg = model_config(&a.model, s, n_classes)?;
    let tcfg = train_config(&a.model, s, seed)?;
    let opts = EvalOptions {
        use_clip_voting: a.vote_clips,
        vote_clip_seconds: s
            .vote_clip_seconds
            .unwrap_or(EvalOptions::default().vote_clip_seconds),
        folds: a.folds.clone(),
    };
    let report = kfold_evaluate(&items, &mcfg, &tcfg, &opts)?;
    for f in &report.folds {
        println!(
            "fold {:>2}: {:.4} ({}/{})",
            f.fold, f.accuracy, f.correct, f.n_test
        );
    }
    if let Some(mean) = report.mean_accuracy() {
        println!("mean accuracy: {mean:.4}");
    }
    if let Some(out) = &a.out {
        write_report(&report, out)?;
        info!("wrote {}", out.display());
    }
    Ok(())
}

fn checkpoint_bank(path: &Path) -> Result<(FilterBank, u32)> {
    let model = Checkpoint::load(path)?.into_model();
    let sr = model.config.sample_rate;
    match model.filter_bank() {
        Some(bank) => Ok((bank.clone(), sr)),
        None => bail!("{} has no raw-waveform first layer", path.display()),
    }
}

pub fn analyze_filters(a: &AnalyzeArgs) -> Result<()> {
    let (bank, sr) = checkpoint_bank(&a.ckpt)?;
    create_dir(&a.out)?;
    let report = analyze_bank(&bank, sr, a.pad)?;
    report.write_csv(a.out.join("filters.csv"))?;
    write_heatmap(
        a.out.join("spectra.png"),
        &stretch_rows(to_db(&report.sorted_spectra(), DB_FLOOR)),
        1,
    )?;
    let mut centers: Vec<f64> = report.center_frequencies();
    centers.sort_by(f64::total_cmp);
    if !centers.is_empty() {
        write_lines(
            a.out.join("centers.png"),
            &[&centers],
            PLOT_WIDTH,
            PLOT_HEIGHT,
        )?;
    }
    match &report.fit {
        Some(fit) => println!(
            "f_c ~ {:.2} * exp({:.5} * rank), R^2 = {:.4} over {} filters",
            fit.alpha, fit.beta, fit.r_squared, fit.n
        ),
        None => warn!("too few active filters for an exponential fit"),
    }
    println!(
        "{:.1}% of filters centred below 1 kHz",
        100.0 * report.fraction_below(1000.0)
    );

    if let Some(input) = &a.input {
        let w = resample(&read_wav(input)?, sr)?;
        let act = activation_map(&bank, &w, true)?;
        let rows: Vec<Vec<f64>> = report
            .order
            .iter()
            .rev()
            .map(|&m| act.values[m].iter().map(|v| v * v).collect())
            .collect();
        write_heatmap(
            a.out.join("activations.png"),
            &stretch_rows(to_db(&rows, DB_FLOOR)),
            1,
        )?;
        let basis = wavelet_registry().get("morlet")?;
        let cmp = compare_with_cwt(
            &w,
            &bank,
            &default_scales(w.len(), 64),
            basis.as_ref(),
            bank.kernel,
        )?;
        cmp.write_csv(a.out.join("cwt_compare.csv"))?;
        write_lines(
            a.out.join("cwt_compare.png"),
            &[&cmp.conv_envelope, &cmp.cwt_envelope],
            PLOT_WIDTH,
            PLOT_HEIGHT,
        )?;
        println!(
            "energy peaks: conv {:.3} s, cwt {:.3} s; envelope correlation {}",
            cmp.conv_peak_seconds,
            cmp.cwt_peak_seconds,
            cmp.correlation
                .map_or("n/a".to_string(), |c| format!("{c:.3}"))
        );
    }
    Ok(())
}

pub fn reconstruct(a: &ReconstructArgs, s: &Settings) -> Result<()> {
    let (bank, sr) = checkpoint_bank(&a.ckpt)?;
    let d = ReconConfig::default();
    let cfg = ReconConfig {
        c_m: a.cm.or(s.cm).unwrap_or(d.c_m),
        mode: a
            .mode
            .clone()
            .or_else(|| s.mode.clone())
            .unwrap_or(d.mode.clone()),
        epsilon: a.epsilon.or(s.epsilon).unwrap_or(d.epsilon),
        smooth_window: s.smooth_window.unwrap_or(d.smooth_window),
        ..d
    };
    reconstructor_registry().get(&cfg.mode)?;
    let w = resample(&read_wav(&a.input)?, sr)?;
    create_dir(&a.out)?;
    let r = run_reconstruction(&w, &bank, &cfg)?;
    write_wav_f32(a.out.join("recovered.wav"), &r.recovered)?;
    write_lines(
        a.out.join("overlay.png"),
        &[w.samples(), r.recovered.samples()],
        PLOT_WIDTH,
        PLOT_HEIGHT,
    )?;
    write_heatmap(a.out.join("basis.png"), &stretch_rows(r.basis.clone()), 1)?;
    let align = r.alignment.as_ref();
    let metrics: Vec<(&str, String)> = vec![
        ("mode", cfg.mode.clone()),
        ("c_m", cfg.c_m.to_string()),
        (
            "relative_error",
            r.error.map_or(String::new(), |e| e.to_string()),
        ),
        (
            "shift",
            align.map_or(String::new(), |x| x.shift.to_string()),
        ),
        (
            "correlation",
            align.map_or(String::new(), |x| x.correlation.to_string()),
        ),
        (
            "low_confidence",
            align.map_or(String::new(), |x| x.low_confidence.to_string()),
        ),
        ("gain", r.gain.to_string()),
        ("converged", r.converged.to_string()),
        ("iterations", r.iterations.to_string()),
    ];
    write_csv(
        &a.out.join("error.csv"),
        &["metric".into(), "value".into()],
        metrics.iter().map(|(k, v)| vec![k.to_string(), v.clone()]),
    )?;
    if align.is_some_and(|x| x.low_confidence) {
        warn!("alignment is low confidence; the shift may be wrong");
    }
    println!(
        "{}: relative error {}, shift {}",
        cfg.mode,
        r.error.map_or("n/a".into(), |e| format!("{e:.4}")),
        align.map_or(0, |x| x.shift)
    );
    Ok(())
}
