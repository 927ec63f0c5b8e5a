use std::path::Path;

use super::{
    check_population, io_error, label_index, parsed_tag, read_case_index, require_tag, PipelineError, Result,
    PIPELINE_TAG,
};
use crate::dsp::{decode_pcm, resample_linear, spectrogram, PcmAudio, Spectrogram, SpectrogramParams};
use crate::fusion::{fuse_decisions, Decision};
use crate::nn::{train, Dataset, LayerSpec, Model, Tensor, TrainConfig, TrainOutcome};

const KIND: &str = "depression";
const MIN_PER_CLASS: usize = 4;

pub const DEPRESSION_LABELS: [&str; 2] = ["not_depressed", "depressed"];
/// Audio is classified in non-overlapping clips of this length.
pub const CLIP_SECONDS: f64 = 3.0;
/// Side of the square the spectrogram is averaged down to.
pub const POOLED_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioCase {
    pub audio: PcmAudio,
    /// Index into [`DEPRESSION_LABELS`].
    pub label: usize,
    pub subject_id: String,
}

/// Reads a case index whose paths point at headerless 16-bit PCM files;
/// `rate_hz` defaults to `default_rate`.
pub fn load_audio_cases(index: &Path, default_rate: u32) -> Result<Vec<AudioCase>> {
    read_case_index(index)?
        .into_iter()
        .map(|e| {
            let bytes = std::fs::read(&e.path).map_err(io_error(&e.path))?;
            let rate = e.rate_hz.map_or(default_rate, |r| r.round() as u32);
            Ok(AudioCase {
                audio: decode_pcm(&bytes, rate)?,
                label: label_index(&DEPRESSION_LABELS, &e.label)?,
                subject_id: e.id,
            })
        })
        .collect()
}

/// Block average of a frames × bins spectrogram onto `size × size` cells.
/// Cell `i` along an axis of length `n` covers `[⌊i·n/size⌋, ⌊(i+1)·n/size⌋)`,
/// widened to one element when that range is empty.
pub fn pool_spectrogram(s: &Spectrogram, size: usize) -> Vec<f64> {
    let range = |i: usize, n: usize| {
        let lo = (i * n / size).min(n - 1);
        let hi = ((i + 1) * n / size).max(lo + 1).min(n);
        lo..hi
    };
    let mut out = Vec::with_capacity(size * size);
    for r in 0..size {
        let frames = range(r, s.frame_count);
        for c in 0..size {
            let bins = range(c, s.bin_count);
            let mut sum = 0.0;
            for f in frames.clone() {
                sum += s.frame(f)[bins.clone()].iter().sum::<f64>();
            }
            out.push(sum / (frames.len() * bins.len()) as f64);
        }
    }
    out
}

/// Pooled spectrogram of every full clip, as `1 × 64 × 64` tensors in dB.
pub fn clip_tensors(audio: &PcmAudio, params: &SpectrogramParams) -> Result<Vec<Tensor>> {
    let clips = audio.clips(CLIP_SECONDS);
    if clips.is_empty() {
        return Err(PipelineError::AudioTooShort {
            seconds: audio.duration_seconds(),
            clip: CLIP_SECONDS,
        });
    }
    clips
        .iter()
        .map(|clip| {
            let pooled = pool_spectrogram(&spectrogram(clip, params)?, POOLED_SIZE);
            Ok(Tensor::new(vec![1, POOLED_SIZE, POOLED_SIZE], pooled)?)
        })
        .collect()
}

pub fn depression_layers() -> Vec<LayerSpec> {
    let side = ((POOLED_SIZE - 2) / 2 - 2) / 2;
    vec![
        LayerSpec::conv(2, 1, 8, 3, 0),
        LayerSpec::ReLU,
        LayerSpec::max_pool(2, 2),
        LayerSpec::conv(2, 8, 16, 3, 0),
        LayerSpec::ReLU,
        LayerSpec::max_pool(2, 2),
        LayerSpec::Flatten,
        LayerSpec::dense(16 * side * side, 32),
        LayerSpec::ReLU,
        LayerSpec::dense(32, 2),
        LayerSpec::Softmax,
    ]
}

fn standardize(t: &mut Tensor, mean: f64, std: f64) {
    t.data_mut().iter_mut().for_each(|v| *v = (*v - mean) / std);
}

/// Trains the spectrogram network on every clip of every case; clips
/// inherit their case's label. The dB level is standardized with statistics
/// of the training clips, stored in the model.
pub fn train_depression(cases: &[AudioCase], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if cases.is_empty() {
        return Err(PipelineError::Empty("depression corpus".into()));
    }
    let names: Vec<String> = DEPRESSION_LABELS.iter().map(|s| s.to_string()).collect();
    let case_labels: Vec<usize> = cases.iter().map(|c| c.label).collect();
    if let Some(&bad) = case_labels.iter().find(|&&l| l >= names.len()) {
        return Err(PipelineError::UnknownLabel(bad.to_string()));
    }
    check_population(&case_labels, &names, MIN_PER_CLASS)?;
    let rate = cases[0].audio.sample_rate();
    let params = SpectrogramParams::default();
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for case in cases {
        let audio = at_rate(&case.audio, rate)?;
        for t in clip_tensors(&audio, &params)? {
            inputs.push(t);
            labels.push(case.label);
        }
    }
    let count = (inputs.len() * POOLED_SIZE * POOLED_SIZE) as f64;
    let mean = inputs.iter().flat_map(|t| t.data()).sum::<f64>() / count;
    let var = inputs.iter().flat_map(|t| t.data()).map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    for t in &mut inputs {
        standardize(t, mean, std);
    }
    let mut model = Model::new(&[1, POOLED_SIZE, POOLED_SIZE], depression_layers(), names, config.seed)?;
    model.tags.insert(PIPELINE_TAG.into(), KIND.into());
    model.tags.insert("sample_rate".into(), rate.to_string());
    model.tags.insert("clip_seconds".into(), CLIP_SECONDS.to_string());
    model.tags.insert("fft_size".into(), params.fft_size.to_string());
    model.tags.insert("hop".into(), params.hop.to_string());
    model.tags.insert("floor_db".into(), params.floor_db.to_string());
    model.aux.insert("norm.mean", Tensor::from_vec(vec![mean])?);
    model.aux.insert("norm.std", Tensor::from_vec(vec![std])?);
    Ok(train(model, &Dataset::new(inputs, labels)?, config)?)
}

fn at_rate(audio: &PcmAudio, rate: u32) -> Result<PcmAudio> {
    if audio.sample_rate() == rate {
        return Ok(audio.clone());
    }
    let samples = resample_linear(audio.samples(), audio.sample_rate() as f64, rate as f64)?
        .into_iter()
        .map(|v| v.clamp(-1.0, 1.0))
        .collect();
    Ok(PcmAudio::new(rate, samples)?)
}

/// One decision per full clip, in clip order.
pub fn clip_decisions(model: &Model, audio: &PcmAudio) -> Result<Vec<Decision>> {
    require_tag(model, KIND)?;
    let rate: u32 = parsed_tag(model, "sample_rate", KIND)?;
    let params = SpectrogramParams {
        fft_size: parsed_tag(model, "fft_size", KIND)?,
        hop: parsed_tag(model, "hop", KIND)?,
        floor_db: parsed_tag(model, "floor_db", KIND)?,
    };
    let stat = |name: &str| -> Result<f64> {
        model
            .aux
            .get(name)
            .and_then(|t| t.data().first().copied())
            .ok_or_else(|| PipelineError::WrongModel {
                expected: KIND,
                reason: format!("missing `{name}`"),
            })
    };
    let (mean, std) = (stat("norm.mean")?, stat("norm.std")?);
    let audio = at_rate(audio, rate)?;
    let clip_ms = (CLIP_SECONDS * 1000.0) as i64;
    clip_tensors(&audio, &params)?
        .into_iter()
        .enumerate()
        .map(|(i, mut t)| {
            standardize(&mut t, mean, std);
            let p = model.predict_one(&t)?;
            Ok(Decision::new(format!("clip{i}"), p.posterior, 1.0, i as i64 * clip_ms)?)
        })
        .collect()
}

/// Case-level decision: the clip posteriors pooled with equal weights.
pub fn classify_audio(model: &Model, audio: &PcmAudio) -> Result<Decision> {
    Ok(fuse_decisions(&clip_decisions(model, audio)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::infer_shapes;

    #[test]
    fn architecture_type_checks() {
        let shapes = infer_shapes(&[1, POOLED_SIZE, POOLED_SIZE], &depression_layers()).unwrap();
        assert_eq!(shapes.last().unwrap(), &vec![2]);
    }

    #[test]
    fn pooling_averages_blocks() {
        let s = Spectrogram {
            frame_count: 4,
            bin_count: 4,
            values: (0..16).map(|v| v as f64).collect(),
            hop: 1,
            fft_size: 6,
            sample_rate: 1.0,
        };
        assert_eq!(pool_spectrogram(&s, 2), vec![2.5, 4.5, 10.5, 12.5]);
        assert_eq!(pool_spectrogram(&s, 4), s.values);
        assert_eq!(pool_spectrogram(&s, 8).len(), 64);
    }

    #[test]
    fn short_audio_is_rejected() {
        let audio = PcmAudio::new(8000, vec![0.0; 8000]).unwrap();
        assert!(matches!(
            clip_tensors(&audio, &SpectrogramParams::default()),
            Err(PipelineError::AudioTooShort { .. })
        ));
    }
}
