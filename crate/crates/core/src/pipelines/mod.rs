//! The three use cases as trainable pipelines: activity and fall
//! recognition from wrist accelerometry, depression screening from voice,
//! and cognitive screening from handwriting. Also dataset formats,
//! evaluation metrics and synthetic corpora.

mod activity;
mod cognitive;
mod depression;
mod manifest;
mod metrics;
pub mod synthetic;

use std::path::PathBuf;

use thiserror::Error;

use crate::dsp::DspError;
use crate::fusion::FusionError;
use crate::nn::{Model, NnError};
use crate::rng::Rng;
use crate::simulator::SimError;

pub use activity::{
    activity_layers, classify_window, conform_window, load_activity_jsonl, parse_activity_jsonl, read_activity_records,
    train_activity,
    window_tensor, write_activity_jsonl, ActivityClassifier, ActivityRecord, Arch, Classified, LabeledWindowSet,
    WindowConfig,
};
pub use cognitive::{
    cognitive_layers, export_point_cloud, grid_tensor, load_stroke_cases, parse_point_cloud, screen_cognitive,
    train_cognitive, ScreeningResult, StrokeCase, COGNITIVE_LABELS, GRID_DIMS,
};
pub use depression::{
    classify_audio, clip_decisions, clip_tensors, depression_layers, load_audio_cases, pool_spectrogram,
    train_depression, AudioCase, CLIP_SECONDS, DEPRESSION_LABELS, POOLED_SIZE,
};
pub use manifest::{ActivityLabel, Group, Manifest};
pub use metrics::ConfusionMatrix;

/// Tag naming the pipeline a model belongs to.
pub const PIPELINE_TAG: &str = "pipeline";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Nn(#[from] NnError),

    #[error(transparent)]
    Dsp(#[from] DspError),

    #[error(transparent)]
    Fusion(#[from] FusionError),

    #[error(transparent)]
    Simulation(#[from] SimError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Format { path: String, line: usize, reason: String },

    #[error("label `{0}` is not in the manifest")]
    UnknownLabel(String),

    #[error("manifest is invalid: {0}")]
    Manifest(String),

    #[error("{0} is empty")]
    Empty(String),

    #[error("training needs at least two classes, found {0}")]
    TooFewClasses(usize),

    #[error("class `{label}` has {count} examples, need at least {needed}")]
    Underpopulated { label: String, count: usize, needed: usize },

    #[error("audio of {seconds:.3} s is shorter than one {clip} s clip")]
    AudioTooShort { seconds: f64, clip: f64 },

    #[error("model is not a {expected} model: {reason}")]
    WrongModel { expected: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

pub(crate) fn io_error(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> PipelineError {
    let path = path.into();
    move |source| PipelineError::Io { path, source }
}

/// Stratified split: from each class, `round(n_c·test_fraction)` examples
/// (seed-shuffled) go to the test side. Both index lists come back sorted.
pub fn holdout_split(labels: &[usize], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = Rng::derive(seed, 0x5917);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        rng.shuffle(&mut members);
        let n_test = (members.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Class counts over `classes` labels.
pub fn class_counts(labels: &[usize], classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

/// Fails unless at least two classes have examples and each populated class
/// has at least `needed`.
pub(crate) fn check_population(labels: &[usize], names: &[String], needed: usize) -> Result<()> {
    let counts = class_counts(labels, names.len());
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(PipelineError::TooFewClasses(present));
    }
    for (name, &count) in names.iter().zip(&counts) {
        if count > 0 && count < needed {
            return Err(PipelineError::Underpopulated {
                label: name.clone(),
                count,
                needed,
            });
        }
    }
    Ok(())
}

pub(crate) fn require_tag(model: &Model, expected: &'static str) -> Result<()> {
    match model.tags.get(PIPELINE_TAG) {
        Some(kind) if kind == expected => Ok(()),
        other => Err(PipelineError::WrongModel {
            expected,
            reason: format!("pipeline tag is {other:?}"),
        }),
    }
}

pub(crate) fn tag<'a>(model: &'a Model, key: &str, expected: &'static str) -> Result<&'a str> {
    model
        .tags
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| PipelineError::WrongModel {
            expected,
            reason: format!("missing tag `{key}`"),
        })
}

pub(crate) fn parsed_tag<T: std::str::FromStr>(model: &Model, key: &str, expected: &'static str) -> Result<T> {
    let raw = tag(model, key, expected)?;
    raw.parse().map_err(|_| PipelineError::WrongModel {
        expected,
        reason: format!("tag `{key}` = `{raw}` does not parse"),
    })
}

/// FNV-1a over the parameter bit patterns, as 16 hex digits.
pub fn model_fingerprint(model: &Model) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (name, t) in model.params.iter().chain(model.state.iter()) {
        for b in name.bytes().chain(t.data().iter().flat_map(|v| v.to_bits().to_le_bytes())) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// One row of a `cases.csv` index: `id,label,path[,rate_hz]` with a header
/// line. Relative paths resolve against the index file's directory.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CaseEntry {
    pub id: String,
    pub label: String,
    pub path: PathBuf,
    #[serde(default)]
    pub rate_hz: Option<f64>,
}

pub fn read_case_index(path: &std::path::Path) -> Result<Vec<CaseEntry>> {
    let origin = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| PipelineError::Format {
            path: origin.clone(),
            line: 0,
            reason: e.to_string(),
        })?;
    let base = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    let mut entries = Vec::new();
    for row in reader.deserialize::<CaseEntry>() {
        let mut entry = row.map_err(|e| PipelineError::Format {
            path: origin.clone(),
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        if entry.path.is_relative() {
            entry.path = base.join(&entry.path);
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(PipelineError::Empty(origin));
    }
    Ok(entries)
}

/// Writes `entries` as a case index; paths are stored as given.
pub fn write_case_index(path: &std::path::Path, entries: &[CaseEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::Format {
        path: path.display().to_string(),
        line: 0,
        reason: e.to_string(),
    })?;
    for e in entries {
        w.serialize(e).map_err(|e| PipelineError::Format {
            path: path.display().to_string(),
            line: 0,
            reason: e.to_string(),
        })?;
    }
    w.flush().map_err(io_error(path))
}

pub(crate) fn label_index(labels: &[&str], name: &str) -> Result<usize> {
    labels
        .iter()
        .position(|l| *l == name)
        .ok_or_else(|| PipelineError::UnknownLabel(name.to_string()))
}
