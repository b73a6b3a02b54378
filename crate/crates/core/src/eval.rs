//! K-fold cross-validation with optional clip-level majority voting.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::{Arch, Model, ModelConfig, TrainConfig};
use crate::signal::{clip_or_pad, split_clips, Waveform};

pub const REPORT_HEADER: [&str; 6] = ["pipeline", "f1", "nb_f", "n_mfcc", "freq_khz", "acc"];
const FOLD_HEADER: [&str; 4] = ["fold", "n_test", "correct", "accuracy"];

/// Most frequent class; ties go to the lowest class id.
pub fn majority_vote(predictions: &[usize]) -> Result<usize> {
    ensure!(!predictions.is_empty(), "cannot vote over zero clips");
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &p in predictions {
        *counts.entry(p).or_default() += 1;
    }
    let mut best = (0, 0);
    for (class, count) in counts {
        if count > best.1 {
            best = (class, count);
        }
    }
    Ok(best.0)
}

/// One labelled recording in a cross-validation set.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: String,
    pub fold: u8,
    pub label: usize,
    pub waveform: Waveform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Split every file into clips of `vote_clip_seconds`, train on the
    /// clips and predict a file by majority vote over its clips.
    pub use_clip_voting: bool,
    pub vote_clip_seconds: f64,
    /// Folds to hold out in turn; `None` uses every fold present.
    pub folds: Option<Vec<u8>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            use_clip_voting: false,
            vote_clip_seconds: 1.0,
            folds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: u8,
    pub n_test: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Empty when read back from CSV.
    pub predictions: Vec<Prediction>,
}

impl FoldResult {
    pub fn from_predictions(fold: u8, predictions: Vec<Prediction>) -> Self {
        let correct = predictions
            .iter()
            .filter(|p| p.label == p.predicted)
            .count();
        let n_test = predictions.len();
        Self {
            fold,
            n_test,
            correct,
            accuracy: if n_test == 0 {
                0.0
            } else {
                correct as f64 / n_test as f64
            },
            predictions,
        }
    }
}

/// Published comparison figures carried along in reports for context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLine {
    pub name: String,
    pub accuracy: f64,
}

pub fn reference_lines() -> Vec<ReferenceLine> {
    vec![
        ReferenceLine {
            name: "svm_rbf_baseline".into(),
            accuracy: 0.70,
        },
        ReferenceLine {
            name: "published_cnn_baseline".into(),
            accuracy: 0.737,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pipeline: Arch,
    pub f1: usize,
    pub nb_f: usize,
    pub n_mfcc: usize,
    pub sample_rate: u32,
    pub folds: Vec<FoldResult>,
    pub references: Vec<ReferenceLine>,
}

impl EvalReport {
    pub fn new(config: &ModelConfig, folds: Vec<FoldResult>) -> Self {
        Self {
            pipeline: config.arch,
            f1: config.f1,
            nb_f: config.nb_f,
            n_mfcc: config.n_mfcc,
            sample_rate: config.sample_rate,
            folds,
            references: reference_lines(),
        }
    }

    /// Arithmetic mean of the fold accuracies; `None` without folds.
    pub fn mean_accuracy(&self) -> Option<f64> {
        if self.folds.is_empty() {
            None
        } else {
            Some(self.folds.iter().map(|f| f.accuracy).sum::<f64>() / self.folds.len() as f64)
        }
    }

    fn summary_row(&self) -> Option<[String; 6]> {
        let acc = self.mean_accuracy()?;
        let (f1, nb_f, n_mfcc) = match self.pipeline {
            Arch::Raw => (self.f1.to_string(), self.nb_f.to_string(), String::new()),
            Arch::Mfcc => (String::new(), String::new(), self.n_mfcc.to_string()),
        };
        Some([
            self.pipeline.name().to_string(),
            f1,
            nb_f,
            n_mfcc,
            (self.sample_rate as f64 / 1000.0).to_string(),
            acc.to_string(),
        ])
    }
}

/// Per-fold breakdown written next to the summary: `name.csv` → `name_folds.csv`.
pub fn folds_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    path.with_file_name(format!("{stem}_folds.csv"))
}

/// Writes the summary CSV (`pipeline,f1,nb_f,n_mfcc,freq_khz,acc`) and the
/// per-fold CSV next to it. A report without folds gives header-only files.
pub fn write_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_HEADER)?;
    if let Some(row) = report.summary_row() {
        w.write_record(row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(folds_path(path))?;
    w.write_record(FOLD_HEADER)?;
    for f in &report.folds {
        w.write_record([
            f.fold.to_string(),
            f.n_test.to_string(),
            f.correct.to_string(),
            f.accuracy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::format(format!("bad {what} value `{field}`")))
}

/// Reads a report written by [`write_report`]. Predictions are not stored
/// in the CSV files and come back empty; an empty report reads back as
/// `Ok(None)`.
pub fn read_report(path: impl AsRef<Path>) -> Result<Option<EvalReport>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    ensure_header(r.headers()?, &REPORT_HEADER, path)?;
    let Some(row) = r.records().next().transpose()? else {
        return Ok(None);
    };
    let pipeline = Arch::from_name(&row[0])?;
    let opt = |s: &str, what: &str| -> Result<usize> {
        if s.is_empty() {
            Ok(0)
        } else {
            parse(s, what)
        }
    };
    let khz: f64 = parse(&row[4], "freq_khz")?;

    let mut folds = Vec::new();
    let fp = folds_path(path);
    let mut fr = csv::Reader::from_path(&fp)?;
    ensure_header(fr.headers()?, &FOLD_HEADER, &fp)?;
    for rec in fr.records() {
        let rec = rec?;
        folds.push(FoldResult {
            fold: parse(&rec[0], "fold")?,
            n_test: parse(&rec[1], "n_test")?,
            correct: parse(&rec[2], "correct")?,
            accuracy: parse(&rec[3], "accuracy")?,
            predictions: Vec::new(),
        });
    }
    Ok(Some(EvalReport {
        pipeline,
        f1: opt(&row[1], "f1")?,
        nb_f: opt(&row[2], "nb_f")?,
        n_mfcc: opt(&row[3], "n_mfcc")?,
        sample_rate: (khz * 1000.0).round() as u32,
        folds,
        references: reference_lines(),
    }))
}

fn ensure_header(found: &csv::StringRecord, expected: &[&str], path: &Path) -> Result<()> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(Error::format(format!(
            "{}: expected header {}, found {}",
            path.display(),
            expected.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

/// Splits a file into the clips the voting model sees.
fn vote_clips(file_cfg: &ModelConfig, clip_seconds: f64, w: &Waveform) -> Result<Vec<Waveform>> {
    let n_clips = (file_cfg.clip_seconds / clip_seconds).ceil().max(1.0);
    split_clips(&clip_or_pad(w, n_clips * clip_seconds)?, clip_seconds)
}

/// Trains on all folds but one and tests on the held-out fold, for every
/// fold in turn. Every fold uses `train.seed` for weight initialisation
/// and shuffling, so results do not depend on how folds are numbered.
pub fn kfold_evaluate(
    items: &[Item],
    model: &ModelConfig,
    train: &TrainConfig,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let present: BTreeSet<u8> = items.iter().map(|i| i.fold).collect();
    ensure!(
        present.len() >= 2,
        "cross-validation needs at least two folds, found {}",
        present.len()
    );
    let folds: Vec<u8> = match &opts.folds {
        Some(f) => f.clone(),
        None => present.iter().copied().collect(),
    };
    let fold_model = if opts.use_clip_voting {
        ModelConfig {
            clip_seconds: opts.vote_clip_seconds,
            ..model.clone()
        }
    } else {
        model.clone()
    };

    let mut results = Vec::new();
    for k in folds {
        let (test, training): (Vec<&Item>, Vec<&Item>) = items.iter().partition(|i| i.fold == k);
        if test.is_empty() {
            log::warn!("fold {k} has no test files; excluded");
            continue;
        }
        let train_ids: HashSet<&str> = training.iter().map(|i| i.id.as_str()).collect();
        for t in &test {
            if train_ids.contains(t.id.as_str()) {
                return Err(Error::validation(format!(
                    "fold {k}: test file {} also appears in the training set",
                    t.id
                )));
            }
        }
        ensure!(!training.is_empty(), "fold {k} leaves no training data");

        let mut data = Vec::new();
        for item in &training {
            if opts.use_clip_voting {
                for clip in vote_clips(model, opts.vote_clip_seconds, &item.waveform)? {
                    data.push((clip, item.label));
                }
            } else {
                data.push((item.waveform.clone(), item.label));
            }
        }
        let mut net = Model::new(fold_model.clone(), train.seed)?;
        log::info!("fold {k}: training on {} inputs", data.len());
        let history = net.fit(&data, train)?;
        log::info!("fold {k}: stopped by {:?}", history.stop_reason);

        let mut predictions = Vec::with_capacity(test.len());
        for item in test {
            let predicted = if opts.use_clip_voting {
                let clips = vote_clips(model, opts.vote_clip_seconds, &item.waveform)?;
                let votes = clips
                    .iter()
                    .map(|c| net.predict_class(c))
                    .collect::<Result<Vec<_>>>()?;
                majority_vote(&votes)?
            } else {
                net.predict_class(&item.waveform)?
            };
            predictions.push(Prediction {
                id: item.id.clone(),
                label: item.label,
                predicted,
            });
        }
        let result = FoldResult::from_predictions(k, predictions);
        log::info!("fold {k}: accuracy {:.4}", result.accuracy);
        results.push(result);
    }
    Ok(EvalReport::new(model, results))
}
