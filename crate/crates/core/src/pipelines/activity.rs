use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    check_population, class_counts, io_error, parsed_tag, require_tag, tag, ConfusionMatrix, Group, Manifest,
    PipelineError, Result, PIPELINE_TAG,
};
use crate::dsp::{resample_linear, AccelWindow};
use crate::fusion::Decision;
use crate::nn::{train, Dataset, LayerSpec, Model, Tensor, TrainConfig, TrainOutcome};

const KIND: &str = "activity";
const MIN_PER_CLASS: usize = 4;

/// One line of an activity JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub label: String,
    pub rate_hz: f64,
    pub samples: Vec<[f64; 3]>,
}

/// Target rate and length every window is brought to before classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    pub rate_hz: f64,
    pub window_seconds: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            rate_hz: 50.0,
            window_seconds: 1.0,
        }
    }
}

impl WindowConfig {
    pub fn samples(&self) -> usize {
        (self.rate_hz * self.window_seconds).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// 1-D convolutions over a 3×W window.
    OneD,
    /// 3-D convolutions over the window as a 1×3×1×W volume.
    ThreeD,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::OneD => "1d",
            Arch::ThreeD => "3d",
        })
    }
}

impl FromStr for Arch {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1d" => Ok(Arch::OneD),
            "3d" => Ok(Arch::ThreeD),
            other => Err(PipelineError::WrongModel {
                expected: KIND,
                reason: format!("unknown architecture `{other}` (use 1d or 3d)"),
            }),
        }
    }
}

/// Windows brought to a common rate and length, with class indices into
/// the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindowSet {
    pub windows: Vec<AccelWindow>,
    pub labels: Vec<usize>,
    pub manifest: Manifest,
}

impl LabeledWindowSet {
    pub fn from_records(records: &[ActivityRecord], manifest: &Manifest, cfg: &WindowConfig) -> Result<Self> {
        let mut windows = Vec::with_capacity(records.len());
        let mut labels = Vec::with_capacity(records.len());
        for r in records {
            labels.push(manifest.index_of(&r.label)?);
            windows.push(conform_window(&r.samples, r.rate_hz, cfg)?);
        }
        Ok(Self {
            windows,
            labels,
            manifest: manifest.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Windows per manifest class.
    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.labels, self.manifest.len())
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            windows: indices.iter().map(|&i| self.windows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            manifest: self.manifest.clone(),
        }
    }
}

/// Parses JSONL text; blank lines are skipped. `origin` names the source
/// in error messages.
pub fn parse_activity_jsonl(text: &str, origin: &str) -> Result<Vec<ActivityRecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| PipelineError::Format {
            path: origin.to_string(),
            line: i + 1,
            reason,
        };
        let r: ActivityRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if !(r.rate_hz > 0.0 && r.rate_hz.is_finite()) {
            return Err(bad(format!("rate_hz must be positive, got {}", r.rate_hz)));
        }
        if r.samples.is_empty() {
            return Err(bad("no samples".into()));
        }
        records.push(r);
    }
    if records.is_empty() {
        return Err(PipelineError::Empty(origin.to_string()));
    }
    Ok(records)
}

pub fn read_activity_records(path: &Path) -> Result<Vec<ActivityRecord>> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    parse_activity_jsonl(&text, &path.display().to_string())
}

/// Reads an activity file and conforms every record to `cfg`; every label
/// must appear in `manifest`.
pub fn load_activity_jsonl(path: &Path, manifest: &Manifest, cfg: &WindowConfig) -> Result<LabeledWindowSet> {
    LabeledWindowSet::from_records(&read_activity_records(path)?, manifest, cfg)
}

pub fn write_activity_jsonl(records: &[ActivityRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_error(path))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(io_error(path))?;
    }
    w.flush().map_err(io_error(path))
}

/// Resamples to `cfg.rate_hz`, then centre-crops or edge-pads to exactly
/// `cfg.samples()` samples.
pub fn conform_window(samples: &[[f64; 3]], rate_hz: f64, cfg: &WindowConfig) -> Result<AccelWindow> {
    let axes: Vec<Vec<f64>> = (0..3)
        .map(|a| {
            let axis: Vec<f64> = samples.iter().map(|s| s[a]).collect();
            resample_linear(&axis, rate_hz, cfg.rate_hz)
        })
        .collect::<std::result::Result<_, _>>()?;
    let n = axes[0].len();
    let w = cfg.samples();
    let row = |i: usize| [axes[0][i], axes[1][i], axes[2][i]];
    let out: Vec<[f64; 3]> = if n >= w {
        let start = (n - w) / 2;
        (start..start + w).map(row).collect()
    } else {
        let front = (w - n) / 2;
        (0..w).map(|j| row(j.saturating_sub(front).min(n - 1))).collect()
    };
    Ok(AccelWindow::new(cfg.rate_hz, out, 0)?)
}

/// Layer stack for `classes` outputs on windows of `w` samples.
pub fn activity_layers(arch: Arch, w: usize, classes: usize) -> Vec<LayerSpec> {
    let flat = 32 * (w / 2 / 2);
    let head = [
        LayerSpec::Flatten,
        LayerSpec::dense(flat, 64),
        LayerSpec::ReLU,
        LayerSpec::dense(64, classes),
        LayerSpec::Softmax,
    ];
    let mut layers = match arch {
        Arch::OneD => vec![
            LayerSpec::conv(1, 3, 16, 5, 2),
            LayerSpec::ReLU,
            LayerSpec::max_pool(1, 2),
            LayerSpec::conv(1, 16, 32, 5, 2),
            LayerSpec::ReLU,
            LayerSpec::max_pool(1, 2),
        ],
        Arch::ThreeD => {
            let pool = LayerSpec::MaxPool {
                dims: 3,
                window: vec![1, 1, 2],
                stride: vec![1, 1, 2],
            };
            vec![
                LayerSpec::Conv {
                    dims: 3,
                    in_channels: 1,
                    out_channels: 16,
                    kernel: vec![3, 1, 5],
                    stride: vec![1, 1, 1],
                    padding: vec![0, 0, 2],
                },
                LayerSpec::ReLU,
                pool.clone(),
                LayerSpec::Conv {
                    dims: 3,
                    in_channels: 16,
                    out_channels: 32,
                    kernel: vec![1, 1, 5],
                    stride: vec![1, 1, 1],
                    padding: vec![0, 0, 2],
                },
                LayerSpec::ReLU,
                pool,
            ]
        }
    };
    layers.extend(head);
    layers
}

fn input_shape(arch: Arch, w: usize) -> Vec<usize> {
    match arch {
        Arch::OneD => vec![3, w],
        Arch::ThreeD => vec![1, 3, 1, w],
    }
}

/// Axis-major z-scored tensor for one window.
pub fn window_tensor(window: &AccelWindow, mean: &[f64; 3], std: &[f64; 3], arch: Arch) -> Tensor {
    let w = window.len();
    let mut data = Vec::with_capacity(3 * w);
    for a in 0..3 {
        data.extend(window.samples.iter().map(|s| (s[a] - mean[a]) / std[a]));
    }
    Tensor::new(input_shape(arch, w), data).expect("3·W values")
}

fn axis_stats(windows: &[&AccelWindow]) -> ([f64; 3], [f64; 3]) {
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    let count = windows.iter().map(|w| w.len()).sum::<usize>() as f64;
    for a in 0..3 {
        let sum: f64 = windows.iter().flat_map(|w| w.samples.iter().map(move |s| s[a])).sum();
        mean[a] = sum / count;
        let ss: f64 = windows
            .iter()
            .flat_map(|w| w.samples.iter().map(move |s| (s[a] - mean[a]).powi(2)))
            .sum();
        let sd = (ss / count).sqrt();
        std[a] = if sd > 1e-12 { sd } else { 1.0 };
    }
    (mean, std)
}

/// Trains the activity network on every window of `data`. Normalization
/// statistics, window geometry and the label grouping travel with the
/// model.
pub fn train_activity(data: &LabeledWindowSet, config: &TrainConfig, arch: Arch) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(PipelineError::Empty("activity dataset".into()));
    }
    let names = data.manifest.names();
    check_population(&data.labels, &names, MIN_PER_CLASS)?;
    let rate = data.windows[0].sample_rate;
    let w = data.windows[0].len();
    if let Some(bad) = data.windows.iter().find(|x| x.len() != w || x.sample_rate != rate) {
        return Err(PipelineError::WrongModel {
            expected: KIND,
            reason: format!(
                "windows differ in geometry: {} samples at {} Hz vs {w} at {rate} Hz",
                bad.len(),
                bad.sample_rate
            ),
        });
    }
    let (mean, std) = axis_stats(&data.windows.iter().collect::<Vec<_>>());
    let mut model = Model::new(&input_shape(arch, w), activity_layers(arch, w, names.len()), names, config.seed)?;
    model.tags.insert(PIPELINE_TAG.into(), KIND.into());
    model.tags.insert("arch".into(), arch.to_string());
    model.tags.insert("rate_hz".into(), rate.to_string());
    model.tags.insert("window_samples".into(), w.to_string());
    let groups: Vec<String> = data.manifest.groups().iter().map(Group::to_string).collect();
    model.tags.insert("groups".into(), groups.join(","));
    model.tags.insert("source".into(), data.manifest.source.clone());
    model.aux.insert("norm.mean", Tensor::from_vec(mean.to_vec())?);
    model.aux.insert("norm.std", Tensor::from_vec(std.to_vec())?);
    let inputs = data.windows.iter().map(|x| window_tensor(x, &mean, &std, arch)).collect();
    let dataset = Dataset::new(inputs, data.labels.clone())?;
    Ok(train(model, &dataset, config)?)
}

/// Outcome of classifying one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Classified {
    pub decision: Decision,
    pub index: usize,
    pub label: String,
    pub group: Group,
}

/// A trained activity model with its preprocessing settings unpacked.
#[derive(Debug, Clone)]
pub struct ActivityClassifier {
    model: Model,
    meta: Meta,
}

#[derive(Debug, Clone)]
struct Meta {
    arch: Arch,
    window: WindowConfig,
    mean: [f64; 3],
    std: [f64; 3],
    groups: Vec<Group>,
}

impl Meta {
    fn read(model: &Model) -> Result<Self> {
        require_tag(model, KIND)?;
        let arch: Arch = tag(model, "arch", KIND)?.parse()?;
        let rate_hz: f64 = parsed_tag(model, "rate_hz", KIND)?;
        let samples: usize = parsed_tag(model, "window_samples", KIND)?;
        let groups = tag(model, "groups", KIND)?
            .split(',')
            .map(Group::from_str)
            .collect::<Result<Vec<_>>>()?;
        if groups.len() != model.num_classes() {
            return Err(PipelineError::WrongModel {
                expected: KIND,
                reason: format!("{} groups for {} classes", groups.len(), model.num_classes()),
            });
        }
        let stat = |name: &str| -> Result<[f64; 3]> {
            let t = model.aux.get(name).ok_or_else(|| PipelineError::WrongModel {
                expected: KIND,
                reason: format!("missing `{name}`"),
            })?;
            <[f64; 3]>::try_from(t.data()).map_err(|_| PipelineError::WrongModel {
                expected: KIND,
                reason: format!("`{name}` must hold 3 values"),
            })
        };
        Ok(Self {
            arch,
            window: WindowConfig {
                rate_hz,
                window_seconds: samples as f64 / rate_hz,
            },
            mean: stat("norm.mean")?,
            std: stat("norm.std")?,
            groups,
        })
    }

    fn classify(&self, model: &Model, window: &AccelWindow) -> Result<Classified> {
        let conformed = conform_window(&window.samples, window.sample_rate, &self.window)?;
        let x = window_tensor(&conformed, &self.mean, &self.std, self.arch);
        let p = model.predict_one(&x)?;
        Ok(Classified {
            decision: Decision::new(KIND, p.posterior, 1.0, window.start_time)?,
            group: self.groups[p.index],
            index: p.index,
            label: p.label,
        })
    }
}

impl ActivityClassifier {
    pub fn new(model: Model) -> Result<Self> {
        let meta = Meta::read(&model)?;
        Ok(Self { model, meta })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn window_config(&self) -> WindowConfig {
        self.meta.window
    }

    pub fn groups(&self) -> &[Group] {
        &self.meta.groups
    }

    /// Class indices in the FALL group.
    pub fn fall_indices(&self) -> Vec<usize> {
        (0..self.meta.groups.len())
            .filter(|&i| self.meta.groups[i] == Group::Fall)
            .collect()
    }

    pub fn classify(&self, window: &AccelWindow) -> Result<Classified> {
        self.meta.classify(&self.model, window)
    }

    /// Confusion matrix over a labelled set; its labels are matched to the
    /// model's classes by name.
    pub fn evaluate(&self, data: &LabeledWindowSet) -> Result<ConfusionMatrix> {
        let names = self.model.label_names().to_vec();
        let mut m = ConfusionMatrix::new(names.clone());
        for (w, &l) in data.windows.iter().zip(&data.labels) {
            let name = &data.manifest.labels[l].name;
            let truth = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| PipelineError::UnknownLabel(name.clone()))?;
            m.record(truth, self.classify(w)?.index);
        }
        Ok(m)
    }
}

/// Classifies one window with `model`, resampling and normalizing it the
/// way the training data was.
pub fn classify_window(model: &Model, window: &AccelWindow) -> Result<Decision> {
    Ok(Meta::read(model)?.classify(model, window)?.decision)
}
