//! Information fusion at three levels: raw streams aligned on a shared time
//! grid, z-scored feature concatenation, and log-linear pooling of class
//! posteriors. Also the debouncing rule used for fall alerts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, DspError};
use crate::nn::argmax;

/// Added to probabilities before taking logs when pooling.
pub const POOL_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("nothing to fuse")]
    Empty,

    #[error("posterior of `{source_id}` is invalid: {reason}")]
    InvalidPosterior { source_id: String, reason: String },

    #[error("decision weight {0} must be finite and >= 0")]
    InvalidWeight(f64),

    #[error("label-set size mismatch: expected {expected}, `{source_id}` has {found}")]
    LabelCount {
        source_id: String,
        expected: usize,
        found: usize,
    },

    #[error("all decision weights are zero")]
    ZeroWeights,

    #[error("streams do not overlap in time")]
    NoOverlap,

    #[error("stream {index} is invalid: {reason}")]
    InvalidStream { index: usize, reason: String },

    #[error("feature vector {index} has {len} elements, need at least 2")]
    ShortFeature { index: usize, len: usize },

    #[error("smoothing window k must be >= 1 and threshold in (0, 1], got k={k}, threshold={threshold}")]
    InvalidRule { k: usize, threshold: f64 },

    #[error(transparent)]
    Dsp(#[from] DspError),
}

pub type Result<T> = std::result::Result<T, FusionError>;

/// One source's class posterior at a point in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub source_id: String,
    pub posterior: Vec<f64>,
    pub weight: f64,
    pub timestamp: i64,
}

impl Decision {
    pub fn new(source_id: impl Into<String>, posterior: Vec<f64>, weight: f64, timestamp: i64) -> Result<Self> {
        let d = Self {
            source_id: source_id.into(),
            posterior,
            weight,
            timestamp,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| FusionError::InvalidPosterior {
            source_id: self.source_id.clone(),
            reason,
        };
        if self.posterior.is_empty() {
            return Err(bad("empty".into()));
        }
        if let Some(p) = self.posterior.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(bad(format!("entry {p} is negative or non-finite")));
        }
        let sum: f64 = self.posterior.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(bad(format!("entries sum to {sum}")));
        }
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return Err(FusionError::InvalidWeight(self.weight));
        }
        Ok(())
    }

    /// Most probable class, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.posterior)
    }

    pub fn max_posterior(&self) -> f64 {
        self.posterior[self.argmax()]
    }
}

/// A uniformly sampled source stream; `channels` holds one column per
/// measured quantity, all of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStream {
    /// Time of the first sample, ms.
    pub start_ms: f64,
    pub rate_hz: f64,
    pub channels: Vec<Vec<f64>>,
}

impl RawStream {
    fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    fn end_ms(&self) -> f64 {
        self.start_ms + (self.len() - 1) as f64 * 1000.0 / self.rate_hz
    }
}

/// Streams resampled onto one grid; `blocks[s][c][row]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedFrame {
    pub timestamps_ms: Vec<f64>,
    pub blocks: Vec<Vec<Vec<f64>>>,
}

impl AlignedFrame {
    pub fn rows(&self) -> usize {
        self.timestamps_ms.len()
    }
}

/// Raw-level fusion: linear resampling of every stream onto a `target_rate`
/// grid covering the intersection of their time spans.
pub fn align_raw(streams: &[RawStream], target_rate: f64) -> Result<AlignedFrame> {
    if streams.is_empty() {
        return Err(FusionError::Empty);
    }
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(DspError::InvalidRate(target_rate).into());
    }
    for (index, s) in streams.iter().enumerate() {
        let invalid = |reason: &str| FusionError::InvalidStream {
            index,
            reason: reason.to_string(),
        };
        if !(s.rate_hz > 0.0 && s.rate_hz.is_finite()) {
            return Err(invalid("rate must be positive"));
        }
        if s.len() == 0 {
            return Err(invalid("no samples"));
        }
        if s.channels.iter().any(|c| c.len() != s.len()) {
            return Err(invalid("channels differ in length"));
        }
    }
    let start = streams.iter().map(|s| s.start_ms).fold(f64::NEG_INFINITY, f64::max);
    let end = streams.iter().map(RawStream::end_ms).fold(f64::INFINITY, f64::min);
    if end < start {
        return Err(FusionError::NoOverlap);
    }
    let step = 1000.0 / target_rate;
    let rows = ((end - start) / step + 1e-9).floor() as usize + 1;
    let timestamps_ms: Vec<f64> = (0..rows).map(|j| start + j as f64 * step).collect();
    let mut blocks = Vec::with_capacity(streams.len());
    for s in streams {
        let offsets: Vec<f64> = timestamps_ms.iter().map(|t| (t - s.start_ms) / 1000.0).collect();
        let block = s
            .channels
            .iter()
            .map(|c| {
                if s.rate_hz == target_rate && s.start_ms == start {
                    Ok(c[..rows].to_vec())
                } else {
                    dsp::interpolate_at(c, s.rate_hz, &offsets)
                }
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        blocks.push(block);
    }
    Ok(AlignedFrame { timestamps_ms, blocks })
}

/// Feature-level fusion: each vector z-scored on its own, then concatenated
/// in input order.
pub fn fuse_features(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    if vectors.is_empty() {
        return Err(FusionError::Empty);
    }
    let mut out = Vec::with_capacity(vectors.iter().map(Vec::len).sum());
    for (index, v) in vectors.iter().enumerate() {
        if v.len() < 2 {
            return Err(FusionError::ShortFeature { index, len: v.len() });
        }
        out.extend(dsp::zscore(v)?);
    }
    Ok(out)
}

/// Decision-level fusion by weighted geometric mean of the posteriors,
/// renormalized. The result is attributed to source `fused` at the latest
/// input timestamp.
pub fn fuse_decisions(decisions: &[Decision]) -> Result<Decision> {
    let first = decisions.first().ok_or(FusionError::Empty)?;
    let classes = first.posterior.len();
    for d in decisions {
        d.validate()?;
        if d.posterior.len() != classes {
            return Err(FusionError::LabelCount {
                source_id: d.source_id.clone(),
                expected: classes,
                found: d.posterior.len(),
            });
        }
    }
    let total: f64 = decisions.iter().map(|d| d.weight).sum();
    if total <= 0.0 {
        return Err(FusionError::ZeroWeights);
    }
    // Summing in a canonical order keeps the result independent of input order.
    let mut order: Vec<&Decision> = decisions.iter().collect();
    order.sort_by(|a, b| {
        a.weight
            .total_cmp(&b.weight)
            .then_with(|| cmp_slices(&a.posterior, &b.posterior))
    });
    let log_pool: Vec<f64> = (0..classes)
        .map(|k| {
            order
                .iter()
                .map(|d| d.weight / total * (d.posterior[k] + POOL_EPSILON).ln())
                .sum::<f64>()
        })
        .collect();
    let peak = log_pool.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_pool.iter().map(|l| (l - peak).exp()).collect();
    let z: f64 = raw.iter().sum();
    Ok(Decision {
        source_id: "fused".into(),
        posterior: raw.iter().map(|v| v / z).collect(),
        weight: 1.0,
        timestamp: decisions.iter().map(|d| d.timestamp).max().unwrap_or(0),
    })
}

fn cmp_slices(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Window length and per-decision confidence for [`temporal_smooth`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingRule {
    pub k: usize,
    pub threshold: f64,
}

impl Default for SmoothingRule {
    fn default() -> Self {
        Self { k: 3, threshold: 0.8 }
    }
}

impl SmoothingRule {
    pub fn new(k: usize, threshold: f64) -> Result<Self> {
        let rule = Self { k, threshold };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(FusionError::InvalidRule {
                k: self.k,
                threshold: self.threshold,
            });
        }
        Ok(())
    }

    /// Qualifying decisions needed to fire, `⌈k/2⌉`.
    pub fn quorum(&self) -> usize {
        self.k.div_ceil(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Smoothed {
    pub label: usize,
    pub fired: bool,
}

/// Looks at the last `k` decisions of `history` (oldest first). Fires when
/// at least `⌈k/2⌉` of them have their argmax in `trigger` with posterior
/// at or above the threshold. The smoothed label is the majority argmax,
/// ties going to the most recent.
pub fn temporal_smooth(history: &[Decision], rule: &SmoothingRule, trigger: &[usize]) -> Result<Smoothed> {
    rule.validate()?;
    if history.is_empty() {
        return Err(FusionError::Empty);
    }
    let window = &history[history.len().saturating_sub(rule.k)..];
    let labels: Vec<usize> = window.iter().map(Decision::argmax).collect();
    let qualifying = window
        .iter()
        .zip(&labels)
        .filter(|(d, l)| trigger.contains(l) && d.posterior[**l] >= rule.threshold)
        .count();
    let mut counts: Vec<(usize, usize, usize)> = Vec::new(); // (label, count, last position)
    for (pos, &l) in labels.iter().enumerate() {
        match counts.iter_mut().find(|c| c.0 == l) {
            Some(c) => {
                c.1 += 1;
                c.2 = pos;
            }
            None => counts.push((l, 1, pos)),
        }
    }
    let label = counts
        .iter()
        .max_by_key(|c| (c.1, c.2))
        .map(|c| c.0)
        .expect("window is non-empty");
    Ok(Smoothed {
        label,
        fired: qualifying >= rule.quorum(),
    })
}
