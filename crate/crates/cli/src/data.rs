use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::Context;
use wardsense_core::dsp::{encode_pcm, format_strokes};
use wardsense_core::nn::{load_model, save_model, EpochStats, TrainConfig, TrainOutcome};
use wardsense_core::pipelines::synthetic::{
    activity_config, activity_records, cognitive_config, cognitive_corpus, depression_config, depression_corpus,
};
use wardsense_core::pipelines::{
    self, classify_audio, clip_decisions, holdout_split, load_activity_jsonl, load_audio_cases, load_stroke_cases,
    model_fingerprint, screen_cognitive, write_activity_jsonl, write_case_index, ActivityClassifier,
    ActivityLabel, ActivityRecord, Arch, CaseEntry, ConfusionMatrix, Manifest, WindowConfig, COGNITIVE_LABELS,
    DEPRESSION_LABELS, PIPELINE_TAG,
};
use wardsense_core::simulator::{synth_accel, synth_audio, synth_strokes, walking_with_falls, Modality, TraceKind, TraceSpec};

use crate::args::{ArchArg, EvalArgs, SynthArgs, SynthDatasetArgs, Task, TrainActivityArgs, TrainCaseArgs, TrainCommon};
use crate::usage;

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

pub fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    let kind = match TraceKind::from_str(&a.kind) {
        Ok(k) => k,
        Err(e) => return usage(e.to_string()),
    };
    let mut spec = TraceSpec::new(kind, a.duration, a.rate.unwrap_or_else(|| kind.default_rate()), a.seed);
    if let Some(amp) = a.amplitude {
        spec.amplitude = amp;
    }
    if let Err(e) = spec.validate() {
        return usage(e.to_string());
    }
    if a.count == 0 || (a.count > 1 && kind.modality() != Modality::Accel) {
        return usage("--count must be 1, or more for accelerometer kinds");
    }
    if !a.falls.is_empty() {
        if kind != TraceKind::Walking {
            return usage("--falls applies to walking traces only");
        }
        if a.amplitude.is_some() {
            return usage("--amplitude cannot be combined with --falls");
        }
        if a.duration.fract() != 0.0 {
            return usage("--falls needs a whole-second --duration");
        }
        if let Some(bad) = a.falls.iter().find(|&&s| s as f64 >= a.duration) {
            return usage(format!("fall second {bad} is beyond a {} s trace", a.duration));
        }
    }

    match kind.modality() {
        Modality::Accel => {
            let mut records = Vec::with_capacity(a.count);
            for i in 0..a.count as u64 {
                let seed = a.seed + i;
                let trace = if a.falls.is_empty() {
                    synth_accel(&TraceSpec { seed, ..spec })?
                } else {
                    walking_with_falls(a.duration as usize, spec.rate_hz, &a.falls, seed)?
                };
                records.push(ActivityRecord {
                    label: kind.name().to_string(),
                    rate_hz: trace.rate_hz,
                    samples: trace.samples,
                });
            }
            write_activity_jsonl(&records, &a.out)?;
            let n: usize = records.iter().map(|r| r.samples.len()).sum();
            println!("wrote {} record(s), {n} samples to {}", records.len(), a.out.display());
        }
        Modality::Audio => {
            let audio = synth_audio(&spec)?;
            write_file(&a.out, encode_pcm(&audio))?;
            println!(
                "wrote {} samples at {} Hz to {}",
                audio.samples().len(),
                audio.sample_rate(),
                a.out.display()
            );
        }
        Modality::Pen => {
            let strokes = synth_strokes(&spec)?;
            write_file(&a.out, format_strokes(&strokes))?;
            let n: usize = strokes.iter().map(|s| s.len()).sum();
            println!("wrote {} stroke(s), {n} points to {}", strokes.len(), a.out.display());
        }
    }
    Ok(())
}

fn write_split(dir: &Path, entries: &[CaseEntry], labels: &[usize], holdout: f64, seed: u64) -> anyhow::Result<()> {
    write_case_index(&dir.join("cases.csv"), entries)?;
    let (train, test) = holdout_split(labels, holdout, seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| entries[i].clone()).collect::<Vec<_>>();
    write_case_index(&dir.join("train.csv"), &pick(&train))?;
    write_case_index(&dir.join("test.csv"), &pick(&test))?;
    println!(
        "wrote {} cases to {} ({} train, {} test)",
        entries.len(),
        dir.display(),
        train.len(),
        test.len()
    );
    Ok(())
}

pub fn synth_dataset(a: &SynthDatasetArgs) -> anyhow::Result<()> {
    if !(0.0..1.0).contains(&a.holdout) {
        return usage(format!("--holdout must be in [0, 1), got {}", a.holdout));
    }
    match a.task {
        Task::Activity => {
            if a.per_class == 0 {
                return usage("--per-class must be positive");
            }
            let records = activity_records([a.per_class; 3], a.seed)?;
            write_activity_jsonl(&records, &a.out)?;
            println!("wrote {} windows ({} per class) to {}", records.len(), a.per_class, a.out.display());
        }
        Task::Depression => {
            let cases = a.cases.unwrap_or(40);
            if cases < 2 {
                return usage("--cases must be at least 2");
            }
            if !(a.seconds > 0.0) {
                return usage("--seconds must be positive");
            }
            let (lo, hi) = TraceKind::ToneLow.rate_bounds();
            if !(lo..=hi).contains(&(a.rate as f64)) {
                return usage(format!("--rate must be within [{lo}, {hi}] Hz"));
            }
            std::fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
            let corpus = depression_corpus(cases, a.seconds, a.rate, a.seed)?;
            let mut entries = Vec::new();
            for c in &corpus {
                let file = format!("{}.pcm", c.subject_id);
                write_file(&a.out.join(&file), encode_pcm(&c.audio))?;
                entries.push(CaseEntry {
                    id: c.subject_id.clone(),
                    label: DEPRESSION_LABELS[c.label].to_string(),
                    path: PathBuf::from(file),
                    rate_hz: Some(a.rate as f64),
                });
            }
            let labels: Vec<usize> = corpus.iter().map(|c| c.label).collect();
            write_split(&a.out, &entries, &labels, a.holdout, a.seed)?;
        }
        Task::Cognitive => {
            let cases = a.cases.unwrap_or(60);
            if cases < 2 {
                return usage("--cases must be at least 2");
            }
            std::fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
            let corpus = cognitive_corpus(cases, a.seed)?;
            let mut entries = Vec::new();
            for c in &corpus {
                let file = format!("{}.strokes", c.subject_id);
                write_file(&a.out.join(&file), format_strokes(&c.strokes))?;
                entries.push(CaseEntry {
                    id: c.subject_id.clone(),
                    label: COGNITIVE_LABELS[c.label].to_string(),
                    path: PathBuf::from(file),
                    rate_hz: None,
                });
            }
            let labels: Vec<usize> = corpus.iter().map(|c| c.label).collect();
            write_split(&a.out, &entries, &labels, a.holdout, a.seed)?;
        }
    }
    Ok(())
}

fn train_config(base: TrainConfig, c: &TrainCommon) -> anyhow::Result<TrainConfig> {
    let cfg = TrainConfig {
        epochs: c.epochs.unwrap_or(base.epochs),
        learning_rate: c.lr.unwrap_or(base.learning_rate),
        batch_size: c.batch.unwrap_or(base.batch_size),
        ..base
    };
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return usage("--epochs and --batch must be positive");
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return usage("--lr must be positive");
    }
    Ok(cfg)
}

fn require_file(path: &Path, flag: &str) -> anyhow::Result<()> {
    if !path.is_file() {
        return usage(format!("{flag} {}: no such file", path.display()));
    }
    Ok(())
}

fn print_history(history: &[EpochStats]) {
    let val = history.iter().any(|h| h.val_loss.is_some());
    print!("{:>5}  {:>10}  {:>8}", "epoch", "loss", "accuracy");
    if val {
        print!("  {:>10}  {:>8}", "val_loss", "val_acc");
    }
    println!();
    for h in history {
        print!("{:>5}  {:>10.6}  {:>8.4}", h.epoch, h.loss, h.accuracy);
        if let (Some(l), Some(a)) = (h.val_loss, h.val_accuracy) {
            print!("  {l:>10.6}  {a:>8.4}");
        }
        println!();
    }
}

fn finish_training(out: TrainOutcome, path: &Path, started: Instant, deterministic: bool) -> anyhow::Result<()> {
    print_history(&out.history);
    save_model(&out.model, path)?;
    println!("model {} written to {}", model_fingerprint(&out.model), path.display());
    if !deterministic {
        println!("trained in {:.2} s", started.elapsed().as_secs_f64());
    }
    Ok(())
}

fn manifest_arg(name: &str) -> anyhow::Result<Manifest> {
    Ok(match name {
        "synthetic" => Manifest::synthetic_three_class(),
        "unimib-shar" => Manifest::unimib_shar(),
        path => {
            require_file(Path::new(path), "--manifest")?;
            Manifest::load(Path::new(path))?
        }
    })
}

pub fn train_activity(a: &TrainActivityArgs, deterministic: bool) -> anyhow::Result<()> {
    require_file(&a.data, "--data")?;
    let manifest = manifest_arg(&a.manifest)?;
    if !(a.window_rate > 0.0 && a.window_seconds > 0.0) || (a.window_rate * a.window_seconds).round() < 4.0 {
        return usage("--window-rate × --window-seconds must give at least 4 samples");
    }
    let cfg = train_config(activity_config(a.common.seed), &a.common)?;
    let window = WindowConfig {
        rate_hz: a.window_rate,
        window_seconds: a.window_seconds,
    };
    let arch = match a.arch {
        ArchArg::OneD => Arch::OneD,
        ArchArg::ThreeD => Arch::ThreeD,
    };
    let started = Instant::now();
    let data = load_activity_jsonl(&a.data, &manifest, &window)?;
    let counts = data.class_counts();
    println!("{} windows over {} classes", data.len(), counts.iter().filter(|&&c| c > 0).count());
    let out = pipelines::train_activity(&data, &cfg, arch)?;
    finish_training(out, &a.common.out, started, deterministic)
}

pub fn train_depression(a: &TrainCaseArgs, deterministic: bool) -> anyhow::Result<()> {
    require_file(&a.data, "--data")?;
    let cfg = train_config(depression_config(a.common.seed), &a.common)?;
    let started = Instant::now();
    let cases = load_audio_cases(&a.data, a.rate)?;
    println!("{} recordings", cases.len());
    let out = pipelines::train_depression(&cases, &cfg)?;
    finish_training(out, &a.common.out, started, deterministic)
}

pub fn train_cognitive(a: &TrainCaseArgs, deterministic: bool) -> anyhow::Result<()> {
    require_file(&a.data, "--data")?;
    let cfg = train_config(cognitive_config(a.common.seed), &a.common)?;
    let started = Instant::now();
    let cases = load_stroke_cases(&a.data)?;
    println!("{} drawings", cases.len());
    let out = pipelines::train_cognitive(&cases, &cfg)?;
    finish_training(out, &a.common.out, started, deterministic)
}

fn names(labels: &[&str]) -> Vec<String> {
    labels.iter().map(|s| s.to_string()).collect()
}

pub fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    require_file(&a.model, "--model")?;
    require_file(&a.data, "--data")?;
    let model = load_model(&a.model)?;
    let kind = model.tags.get(PIPELINE_TAG).cloned().unwrap_or_default();
    println!("model {} ({kind})", model_fingerprint(&model));
    let cm = match kind.as_str() {
        "activity" => {
            let clf = ActivityClassifier::new(model)?;
            let labels = clf
                .model()
                .label_names()
                .iter()
                .zip(clf.groups())
                .map(|(name, &group)| ActivityLabel {
                    name: name.clone(),
                    group,
                })
                .collect();
            let manifest = Manifest::new("model", labels)?;
            let data = load_activity_jsonl(&a.data, &manifest, &clf.window_config())?;
            clf.evaluate(&data)?
        }
        "depression" => {
            let cases = load_audio_cases(&a.data, a.rate)?;
            let mut cm = ConfusionMatrix::new(names(&DEPRESSION_LABELS));
            let mut clips = ConfusionMatrix::new(names(&DEPRESSION_LABELS));
            for c in &cases {
                for d in clip_decisions(&model, &c.audio)? {
                    clips.record(c.label, d.argmax());
                }
                cm.record(c.label, classify_audio(&model, &c.audio)?.argmax());
            }
            println!(
                "clip accuracy {:.4} ({}/{})",
                clips.accuracy(),
                clips.correct(),
                clips.total()
            );
            println!("case-level results:");
            cm
        }
        "cognitive" => {
            let cases = load_stroke_cases(&a.data)?;
            let mut cm = ConfusionMatrix::new(names(&COGNITIVE_LABELS));
            for c in &cases {
                let r = screen_cognitive(&model, &c.strokes)?;
                let pred = COGNITIVE_LABELS.iter().position(|l| *l == r.label).unwrap_or(0);
                cm.record(c.label, pred);
            }
            cm
        }
        other => anyhow::bail!("{}: unknown pipeline `{other}`", a.model.display()),
    };
    print!("{}", cm.to_text());
    if let Some(path) = &a.csv {
        write_file(path, cm.to_csv())?;
    }
    Ok(())
}
