use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{DspError, Result};

/// Added to magnitudes before taking the logarithm.
pub const LOG_EPSILON: f64 = 1e-10;

/// Mono audio at a fixed rate, samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PcmAudio {
    sample_rate: u32,
    samples: Vec<f64>,
}

impl PcmAudio {
    pub fn new(sample_rate: u32, samples: Vec<f64>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(DspError::InvalidRate(0.0));
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (-1.0..=1.0).contains(*v)))
        {
            return Err(DspError::SampleOutOfRange { index, value });
        }
        Ok(Self { sample_rate, samples })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Consecutive non-overlapping clips of `clip_seconds`; a trailing
    /// remainder shorter than a clip is dropped.
    pub fn clips(&self, clip_seconds: f64) -> Vec<PcmAudio> {
        let len = (clip_seconds * self.sample_rate as f64).round() as usize;
        if len == 0 {
            return Vec::new();
        }
        self.samples
            .chunks_exact(len)
            .map(|c| PcmAudio {
                sample_rate: self.sample_rate,
                samples: c.to_vec(),
            })
            .collect()
    }
}

/// Headerless 16-bit little-endian signed PCM, scaled by 1/32768.
pub fn decode_pcm(bytes: &[u8], sample_rate: u32) -> Result<PcmAudio> {
    if bytes.len() % 2 != 0 {
        return Err(DspError::OddByteLength(bytes.len()));
    }
    let samples = bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect();
    PcmAudio::new(sample_rate, samples)
}

/// Inverse of [`decode_pcm`]: rounds to the nearest 16-bit level, saturating at the ends.
pub fn encode_pcm(audio: &PcmAudio) -> Vec<u8> {
    let mut out = Vec::with_capacity(audio.samples.len() * 2);
    for &s in &audio.samples {
        let q = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrogramParams {
    pub fft_size: usize,
    pub hop: usize,
    pub floor_db: f64,
}

impl Default for SpectrogramParams {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            hop: 512,
            floor_db: -80.0,
        }
    }
}

impl SpectrogramParams {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || !self.fft_size.is_power_of_two() {
            return Err(DspError::FftSize(self.fft_size));
        }
        if self.hop == 0 {
            return Err(DspError::ZeroHop);
        }
        Ok(())
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.fft_size {
            0
        } else {
            (len - self.fft_size) / self.hop + 1
        }
    }
}

/// Log-magnitude short-time spectrum, `frame_count × bin_count`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frame_count: usize,
    pub bin_count: usize,
    pub values: Vec<f64>,
    pub hop: usize,
    pub fft_size: usize,
    pub sample_rate: f64,
}

impl Spectrogram {
    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.bin_count..(i + 1) * self.bin_count]
    }

    /// Loudest bin of a frame (lowest index on ties).
    pub fn argmax_bin(&self, frame: usize) -> usize {
        crate::nn::argmax(self.frame(frame))
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate / self.fft_size as f64
    }
}

/// Periodic Hann window `0.5 − 0.5·cos(2πn/N)`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

fn plan(n: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(n)
}

/// Full complex DFT of one (already windowed) frame; `frame.len()` must be a power of two.
pub fn frame_spectrum(frame: &[f64]) -> Result<Vec<Complex<f64>>> {
    if frame.len() < 2 || !frame.len().is_power_of_two() {
        return Err(DspError::FftSize(frame.len()));
    }
    let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
    plan(frame.len()).process(&mut buf);
    Ok(buf)
}

/// Spectrogram of arbitrary real samples (no [-1, 1] requirement).
pub fn spectrogram_of(samples: &[f64], sample_rate: f64, params: &SpectrogramParams) -> Result<Spectrogram> {
    params.validate()?;
    if !(sample_rate > 0.0) {
        return Err(DspError::InvalidRate(sample_rate));
    }
    let n = params.fft_size;
    if samples.len() < n {
        return Err(DspError::SignalTooShort {
            len: samples.len(),
            fft_size: n,
        });
    }
    let frames = params.frame_count(samples.len());
    let bins = n / 2 + 1;
    let window = hann_window(n);
    let fft = plan(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut values = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        let start = f * params.hop;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = Complex::new(samples[start + i] * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        values.extend(
            buf[..bins]
                .iter()
                .map(|c| (20.0 * (c.norm() + LOG_EPSILON).log10()).max(params.floor_db)),
        );
    }
    Ok(Spectrogram {
        frame_count: frames,
        bin_count: bins,
        values,
        hop: params.hop,
        fft_size: n,
        sample_rate,
    })
}

/// Hann-windowed log-magnitude spectrogram in dB, floored at `floor_db`.
pub fn spectrogram(audio: &PcmAudio, params: &SpectrogramParams) -> Result<Spectrogram> {
    spectrogram_of(&audio.samples, audio.sample_rate as f64, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm_scaling() {
        assert_eq!(decode_pcm(&[0x00, 0x00], 8000).unwrap().samples(), &[0.0]);
        assert_eq!(decode_pcm(&[0x00, 0x80], 8000).unwrap().samples(), &[-1.0]);
        assert_eq!(decode_pcm(&[0xff, 0x7f], 8000).unwrap().samples(), &[32767.0 / 32768.0]);
        assert!(matches!(decode_pcm(&[0x00], 8000), Err(DspError::OddByteLength(1))));
        assert!(decode_pcm(&[0, 0], 0).is_err());
    }

    #[test]
    fn dc_signal_peaks_at_bin_zero() {
        let audio = PcmAudio::new(44100, vec![0.5; 4096]).unwrap();
        let s = spectrogram(&audio, &SpectrogramParams::default()).unwrap();
        assert_eq!(s.frame_count, 7);
        assert_eq!(s.bin_count, 513);
        for f in 0..s.frame_count {
            assert_eq!(s.argmax_bin(f), 0);
        }
    }

    #[test]
    fn floor_applies_to_silence() {
        let audio = PcmAudio::new(8000, vec![0.0; 256]).unwrap();
        let p = SpectrogramParams {
            fft_size: 128,
            hop: 64,
            floor_db: -80.0,
        };
        let s = spectrogram(&audio, &p).unwrap();
        assert!(s.values.iter().all(|&v| v == -80.0));
    }

    #[test]
    fn parameter_errors() {
        let audio = PcmAudio::new(8000, vec![0.0; 100]).unwrap();
        assert!(matches!(
            spectrogram(&audio, &SpectrogramParams::default()),
            Err(DspError::SignalTooShort { .. })
        ));
        let p = SpectrogramParams {
            fft_size: 48,
            ..SpectrogramParams::default()
        };
        assert!(matches!(spectrogram(&audio, &p), Err(DspError::FftSize(48))));
    }

    #[test]
    fn clips_drop_the_remainder() {
        let audio = PcmAudio::new(10, vec![0.0; 75]).unwrap();
        let clips = audio.clips(3.0);
        assert_eq!(clips.len(), 2);
        assert!(clips.iter().all(|c| c.samples().len() == 30));
    }
}
