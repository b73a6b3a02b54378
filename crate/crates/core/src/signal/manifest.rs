use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const REQUIRED_COLUMNS: [&str; 4] = ["slice_file_name", "fold", "classID", "class"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub path: PathBuf,
    pub file_name: String,
    pub fold: u8,
    pub class_id: usize,
    pub class_name: String,
}

/// Manifest rows sorted by fold, then file name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub entries: Vec<DatasetEntry>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn folds(&self) -> BTreeMap<u8, Vec<&DatasetEntry>> {
        let mut groups: BTreeMap<u8, Vec<&DatasetEntry>> = BTreeMap::new();
        for e in &self.entries {
            groups.entry(e.fold).or_default().push(e);
        }
        groups
    }
}

/// Audio may live at `audio_root/fold{k}/name` (UrbanSound8K layout) or
/// directly at `audio_root/name`.
fn resolve_audio(audio_root: &Path, fold: u8, name: &str) -> Option<PathBuf> {
    let nested = audio_root.join(format!("fold{fold}")).join(name);
    if nested.is_file() {
        return Some(nested);
    }
    let flat = audio_root.join(name);
    flat.is_file().then_some(flat)
}

/// Loads an UrbanSound8K-style metadata CSV.
pub fn load_manifest(
    csv_path: impl AsRef<Path>,
    audio_root: impl AsRef<Path>,
) -> Result<DatasetIndex> {
    let csv_path = csv_path.as_ref();
    let audio_root = audio_root.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(csv_path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Path {
                path: csv_path.to_path_buf(),
                source,
            },
            other => Error::format(format!("{}: {other:?}", csv_path.display())),
        })?;
    let headers = reader.headers()?.clone();
    let mut col = [0usize; 4];
    for (slot, name) in col.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::format(format!("{}: missing column `{name}`", csv_path.display()))
        })?;
    }

    let mut entries = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let field = |i: usize| record.get(col[i]).unwrap_or("");
        let file_name = field(0).to_string();
        let fold: u8 = field(1)
            .parse()
            .map_err(|_| Error::validation(format!("line {line}: bad fold `{}`", field(1))))?;
        if !(1..=10).contains(&fold) {
            return Err(Error::validation(format!(
                "line {line}: fold {fold} outside 1..10"
            )));
        }
        let class_id: usize = field(2)
            .parse()
            .map_err(|_| Error::validation(format!("line {line}: bad classID `{}`", field(2))))?;
        if class_id > 9 {
            return Err(Error::validation(format!(
                "line {line}: classID {class_id} outside 0..9"
            )));
        }
        let path = resolve_audio(audio_root, fold, &file_name).ok_or_else(|| {
            Error::validation(format!(
                "line {line}: audio file `{file_name}` not found under {}",
                audio_root.display()
            ))
        })?;
        entries.push(DatasetEntry {
            path,
            file_name,
            fold,
            class_id,
            class_name: field(3).to_string(),
        });
    }
    entries.sort_by(|a, b| (a.fold, &a.file_name).cmp(&(b.fold, &b.file_name)));
    Ok(DatasetIndex { entries })
}
