//! Deterministic signal preprocessing for the three sensor modalities:
//! PCM audio and spectrograms, accelerometer windows, pen trajectories and
//! their voxel grids. Every function here is pure.

mod accel;
mod audio;
mod pen;
mod signal;

use thiserror::Error;

pub use accel::{accel_magnitude, window_count, window_stream, AccelWindow, MAX_ACCEL_G};
pub use audio::{
    decode_pcm, encode_pcm, frame_spectrum, hann_window, spectrogram, spectrogram_of, PcmAudio, Spectrogram,
    SpectrogramParams, LOG_EPSILON,
};
pub use pen::{format_strokes, parse_strokes, scaled_times, voxelize, PenPoint, PenState, PenStroke, VoxelGrid};
pub use signal::{interpolate_at, resample_linear, zscore};

#[derive(Debug, Error)]
pub enum DspError {
    #[error("PCM byte stream has odd length {0}")]
    OddByteLength(usize),

    #[error("sample rate must be positive, got {0}")]
    InvalidRate(f64),

    #[error("audio sample {index} = {value} lies outside [-1, 1]")]
    SampleOutOfRange { index: usize, value: f64 },

    #[error("signal of {len} samples is shorter than the FFT size {fft_size}")]
    SignalTooShort { len: usize, fft_size: usize },

    #[error("FFT size must be a power of two >= 2, got {0}")]
    FftSize(usize),

    #[error("hop must be >= 1")]
    ZeroHop,

    #[error("acceleration sample {index} is invalid: {reason}")]
    InvalidAccel { index: usize, reason: String },

    #[error("overlap fraction must lie in [0, 1), got {0}")]
    InvalidOverlap(f64),

    #[error("window length rounds to zero samples")]
    EmptyWindow,

    #[error("z-score needs at least 2 values, got {0}")]
    TooFewValues(usize),

    #[error("cannot resample an empty signal")]
    EmptySignal,

    #[error("pen point {index}: {reason}")]
    InvalidPenPoint { index: usize, reason: String },

    #[error("stroke file line {line}: {reason}")]
    StrokeParse { line: usize, reason: String },

    #[error("no pen points to voxelize")]
    NoPoints,

    #[error("voxel grid dimensions must each be >= 2, got {0:?}")]
    GridDims([usize; 3]),
}

pub type Result<T> = std::result::Result<T, DspError>;
