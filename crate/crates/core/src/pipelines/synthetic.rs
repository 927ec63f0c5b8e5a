//! Labelled corpora built from the simulator, with known class counts.

use super::{ActivityRecord, AudioCase, Manifest, Result, StrokeCase};
use crate::nn::TrainConfig;
use crate::rng::Rng;
use crate::simulator::{synth_accel, synth_audio, synth_strokes, TraceKind, TraceSpec};

fn case_seed(seed: u64, stream: u64, i: usize) -> u64 {
    Rng::derive(seed, stream ^ ((i as u64) << 8)).next_u64()
}

/// One-second, 50 Hz windows for the walking / idle / fall task, with
/// `counts[c]` windows of class `c` in manifest order, interleaved.
pub fn activity_records(counts: [usize; 3], seed: u64) -> Result<Vec<ActivityRecord>> {
    let kinds = [TraceKind::Walking, TraceKind::Idle, TraceKind::Fall];
    let manifest = Manifest::synthetic_three_class();
    let mut records = Vec::new();
    let longest = counts.iter().copied().max().unwrap_or(0);
    for i in 0..longest {
        for (c, &kind) in kinds.iter().enumerate() {
            if i >= counts[c] {
                continue;
            }
            let spec = TraceSpec::new(kind, 1.0, 50.0, case_seed(seed, c as u64, i));
            let trace = synth_accel(&spec)?;
            records.push(ActivityRecord {
                label: manifest.labels[c].name.clone(),
                rate_hz: trace.rate_hz,
                samples: trace.samples,
            });
        }
    }
    Ok(records)
}

/// `cases` voice recordings of `seconds` each, alternating `tone_low`
/// (labelled depressed) and `tone_high` (not depressed).
pub fn depression_corpus(cases: usize, seconds: f64, rate_hz: u32, seed: u64) -> Result<Vec<AudioCase>> {
    (0..cases)
        .map(|i| {
            let (kind, label) = if i % 2 == 0 {
                (TraceKind::ToneLow, 1)
            } else {
                (TraceKind::ToneHigh, 0)
            };
            let spec = TraceSpec::new(kind, seconds, rate_hz as f64, case_seed(seed, 10, i));
            Ok(AudioCase {
                audio: synth_audio(&spec)?,
                label,
                subject_id: format!("s{i:03}"),
            })
        })
        .collect()
}

/// `cases` handwriting samples alternating smooth spirals (not at risk) and
/// tremor spirals (at risk), 4 s at 100 Hz each.
pub fn cognitive_corpus(cases: usize, seed: u64) -> Result<Vec<StrokeCase>> {
    (0..cases)
        .map(|i| {
            let (kind, label) = if i % 2 == 0 {
                (TraceKind::SpiralSmooth, 0)
            } else {
                (TraceKind::SpiralTremor, 1)
            };
            let spec = TraceSpec::new(kind, 4.0, 100.0, case_seed(seed, 20, i));
            Ok(StrokeCase {
                strokes: synth_strokes(&spec)?,
                label,
                subject_id: format!("p{i:03}"),
            })
        })
        .collect()
}

/// Training settings that fit the synthetic activity task.
pub fn activity_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.05,
        batch_size: 16,
        epochs: 8,
        seed,
        ..TrainConfig::default()
    }
}

/// Training settings that fit the synthetic voice corpus.
pub fn depression_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.02,
        batch_size: 8,
        epochs: 10,
        seed,
        ..TrainConfig::default()
    }
}

/// Training settings that fit the synthetic handwriting corpus.
pub fn cognitive_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.1,
        batch_size: 8,
        epochs: 40,
        seed,
        ..TrainConfig::default()
    }
}
