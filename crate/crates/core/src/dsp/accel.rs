use super::{DspError, Result};

/// Sensor range guard, in g.
pub const MAX_ACCEL_G: f64 = 16.0;

/// A fixed-length window of tri-axial acceleration in g.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelWindow {
    pub sample_rate: f64,
    pub samples: Vec<[f64; 3]>,
    /// Milliseconds since the epoch of the first sample.
    pub start_time: i64,
}

impl AccelWindow {
    pub fn new(sample_rate: f64, samples: Vec<[f64; 3]>, start_time: i64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(DspError::InvalidRate(sample_rate));
        }
        if samples.is_empty() {
            return Err(DspError::EmptySignal);
        }
        for (index, s) in samples.iter().enumerate() {
            if let Some(v) = s.iter().find(|v| !v.is_finite() || v.abs() > MAX_ACCEL_G) {
                return Err(DspError::InvalidAccel {
                    index,
                    reason: format!("value {v} is non-finite or beyond ±{MAX_ACCEL_G} g"),
                });
            }
        }
        Ok(Self {
            sample_rate,
            samples,
            start_time,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Milliseconds covered by the window (`len / rate`).
    pub fn duration_ms(&self) -> i64 {
        (self.samples.len() as f64 * 1000.0 / self.sample_rate).round() as i64
    }

    pub fn end_time(&self) -> i64 {
        self.start_time + self.duration_ms()
    }

    /// One axis (0 = x, 1 = y, 2 = z) as a plain signal.
    pub fn axis(&self, axis: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[axis]).collect()
    }
}

/// Per-sample Euclidean norm `√(x²+y²+z²)`.
pub fn accel_magnitude(window: &AccelWindow) -> Vec<f64> {
    window
        .samples
        .iter()
        .map(|[x, y, z]| (x * x + y * y + z * z).sqrt())
        .collect()
}

fn window_geometry(rate: f64, window_seconds: f64, overlap: f64) -> Result<(usize, usize)> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(DspError::InvalidRate(rate));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(DspError::InvalidOverlap(overlap));
    }
    let width = (rate * window_seconds).round();
    if !(width >= 1.0) {
        return Err(DspError::EmptyWindow);
    }
    let width = width as usize;
    let hop = ((width as f64 * (1.0 - overlap)).round() as usize).max(1);
    Ok((width, hop))
}

/// Number of full windows [`window_stream`] yields for `len` samples.
pub fn window_count(len: usize, rate: f64, window_seconds: f64, overlap: f64) -> Result<usize> {
    let (width, hop) = window_geometry(rate, window_seconds, overlap)?;
    Ok(if len < width { 0 } else { (len - width) / hop + 1 })
}

/// Slices a sample stream into windows of `round(rate·window_seconds)`
/// samples with hop `round(W·(1−overlap))`; a trailing partial window is
/// dropped.
pub fn window_stream(
    samples: &[[f64; 3]],
    rate: f64,
    window_seconds: f64,
    overlap: f64,
    start_time: i64,
) -> Result<Vec<AccelWindow>> {
    let (width, hop) = window_geometry(rate, window_seconds, overlap)?;
    let mut out = Vec::new();
    let mut start = 0;
    while start + width <= samples.len() {
        let t = start_time + (start as f64 * 1000.0 / rate).round() as i64;
        out.push(AccelWindow::new(rate, samples[start..start + width].to_vec(), t)?);
        start += hop;
    }
    Ok(out)
}
