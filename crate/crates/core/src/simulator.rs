//! Seeded synthetic sensor traces standing in for real patients: tri-axial
//! accelerometer activity, voice-like tone mixtures and handwriting
//! spirals. Every generator draws from [`Rng`], so a spec and seed fix the
//! output bit for bit.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dsp::{PcmAudio, PenPoint, PenState, PenStroke, MAX_ACCEL_G};
use crate::rng::Rng;

/// Noise standard deviation on every accelerometer axis, in g.
pub const ACCEL_NOISE_G: f64 = 0.05;
/// Walking cadence on the vertical axis, Hz.
pub const WALK_FREQUENCY_HZ: f64 = 2.0;
/// Length of the impact spike in a fall, seconds.
pub const FALL_SPIKE_SECONDS: f64 = 0.3;
/// Length of the near-weightless phase before the impact, seconds.
pub const FREE_FALL_SECONDS: f64 = 0.2;
/// Tremor oscillation added to the spiral radius, Hz.
pub const TREMOR_HZ: f64 = 8.0;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("unknown trace kind `{0}`")]
    UnknownKind(String),

    #[error("duration must be positive, got {0} s")]
    Duration(f64),

    #[error("rate {rate} Hz is outside [{min}, {max}] for {kind}")]
    Rate { kind: TraceKind, rate: f64, min: f64, max: f64 },

    #[error("{kind} is not a {modality} trace")]
    Modality { kind: TraceKind, modality: &'static str },

    #[error("trace too short: {0}")]
    TooShort(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TraceKind {
    Walking,
    Idle,
    Fall,
    SpiralSmooth,
    SpiralTremor,
    ToneLow,
    ToneHigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Accel,
    Audio,
    Pen,
}

impl TraceKind {
    pub const ALL: [TraceKind; 7] = [
        TraceKind::Walking,
        TraceKind::Idle,
        TraceKind::Fall,
        TraceKind::SpiralSmooth,
        TraceKind::SpiralTremor,
        TraceKind::ToneLow,
        TraceKind::ToneHigh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TraceKind::Walking => "walking",
            TraceKind::Idle => "idle",
            TraceKind::Fall => "fall",
            TraceKind::SpiralSmooth => "spiral_smooth",
            TraceKind::SpiralTremor => "spiral_tremor",
            TraceKind::ToneLow => "tone_low",
            TraceKind::ToneHigh => "tone_high",
        }
    }

    pub fn modality(self) -> Modality {
        match self {
            TraceKind::Walking | TraceKind::Idle | TraceKind::Fall => Modality::Accel,
            TraceKind::ToneLow | TraceKind::ToneHigh => Modality::Audio,
            TraceKind::SpiralSmooth | TraceKind::SpiralTremor => Modality::Pen,
        }
    }

    /// Accepted sampling-rate range in Hz.
    pub fn rate_bounds(self) -> (f64, f64) {
        match self.modality() {
            Modality::Accel => (10.0, 500.0),
            Modality::Audio => (8000.0, 96000.0),
            Modality::Pen => (20.0, 1000.0),
        }
    }

    pub fn default_rate(self) -> f64 {
        match self.modality() {
            Modality::Accel => 50.0,
            Modality::Audio => 44100.0,
            Modality::Pen => 100.0,
        }
    }

    /// Kind-specific amplitude: walking swing and spike height in g, tone
    /// level in full scale, tremor radius in tablet units.
    pub fn default_amplitude(self) -> f64 {
        match self {
            TraceKind::Walking => 0.5,
            TraceKind::Idle => 0.0,
            TraceKind::Fall => 2.5,
            TraceKind::ToneLow | TraceKind::ToneHigh => 0.2,
            TraceKind::SpiralSmooth => 0.0,
            TraceKind::SpiralTremor => 0.025,
        }
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TraceKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        TraceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SimError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSpec {
    pub kind: TraceKind,
    pub duration_s: f64,
    pub rate_hz: f64,
    pub seed: u64,
    pub amplitude: f64,
}

impl TraceSpec {
    pub fn new(kind: TraceKind, duration_s: f64, rate_hz: f64, seed: u64) -> Self {
        Self {
            kind,
            duration_s,
            rate_hz,
            seed,
            amplitude: kind.default_amplitude(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(SimError::Duration(self.duration_s));
        }
        let (min, max) = self.kind.rate_bounds();
        if !(min..=max).contains(&self.rate_hz) {
            return Err(SimError::Rate {
                kind: self.kind,
                rate: self.rate_hz,
                min,
                max,
            });
        }
        Ok(())
    }

    fn sample_count(&self) -> usize {
        ((self.duration_s * self.rate_hz).round() as usize).max(1)
    }

    fn expect(&self, modality: Modality, name: &'static str) -> Result<()> {
        self.validate()?;
        if self.kind.modality() != modality {
            return Err(SimError::Modality {
                kind: self.kind,
                modality: name,
            });
        }
        Ok(())
    }
}

/// A tri-axial trace; sample `i` is taken at `start_ms + i·1000/rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelTrace {
    pub rate_hz: f64,
    pub start_ms: i64,
    pub samples: Vec<[f64; 3]>,
}

impl AccelTrace {
    pub fn timestamps_ms(&self) -> Vec<f64> {
        (0..self.samples.len())
            .map(|i| self.start_ms as f64 + i as f64 * 1000.0 / self.rate_hz)
            .collect()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz
    }

    /// Consecutive packets of `round(rate·seconds)` samples; a trailing
    /// partial packet is dropped.
    pub fn packets(&self, seconds: f64) -> Vec<AccelTrace> {
        let len = (self.rate_hz * seconds).round() as usize;
        if len == 0 {
            return Vec::new();
        }
        self.samples
            .chunks_exact(len)
            .enumerate()
            .map(|(i, chunk)| AccelTrace {
                rate_hz: self.rate_hz,
                start_ms: self.start_ms + (i as f64 * len as f64 * 1000.0 / self.rate_hz).round() as i64,
                samples: chunk.to_vec(),
            })
            .collect()
    }
}

fn clamp_g(v: f64) -> f64 {
    v.clamp(-MAX_ACCEL_G, MAX_ACCEL_G)
}

fn resting(rng: &mut Rng) -> [f64; 3] {
    [
        rng.gaussian(0.0, ACCEL_NOISE_G),
        rng.gaussian(0.0, ACCEL_NOISE_G),
        1.0 + rng.gaussian(0.0, ACCEL_NOISE_G),
    ]
}

/// Walking: a 2 Hz swing on the vertical axis over 1 g of gravity. Idle:
/// gravity alone. Fall: idle with a 0.2 s near-weightless drop followed by
/// a 0.3 s impact spike (peak `1 + amplitude` g) at a seeded offset. All
/// axes carry Gaussian noise.
pub fn synth_accel(spec: &TraceSpec) -> Result<AccelTrace> {
    spec.expect(Modality::Accel, "accelerometer")?;
    let n = spec.sample_count();
    let rate = spec.rate_hz;
    let mut rng = Rng::derive(spec.seed, 1);
    let mut samples = Vec::with_capacity(n);
    match spec.kind {
        TraceKind::Walking => {
            let phase = rng.uniform(0.0, 2.0 * PI);
            for i in 0..n {
                let t = i as f64 / rate;
                let mut s = resting(&mut rng);
                s[2] += spec.amplitude * (2.0 * PI * WALK_FREQUENCY_HZ * t + phase).sin();
                samples.push(s);
            }
        }
        TraceKind::Idle => samples.extend((0..n).map(|_| resting(&mut rng))),
        TraceKind::Fall => {
            let event = FREE_FALL_SECONDS + FALL_SPIKE_SECONDS;
            if spec.duration_s < event {
                return Err(SimError::TooShort(format!(
                    "a fall needs {event} s, got {} s",
                    spec.duration_s
                )));
            }
            let onset = rng.uniform(0.0, spec.duration_s - event);
            let impact = onset + FREE_FALL_SECONDS;
            for i in 0..n {
                let t = i as f64 / rate;
                let mut s = resting(&mut rng);
                if (onset..impact).contains(&t) {
                    // Free fall: the sensor reads almost nothing.
                    s = [s[0] * 0.2, s[1] * 0.2, (s[2] - 1.0) * 0.2];
                } else if (impact..impact + FALL_SPIKE_SECONDS).contains(&t) {
                    let tau = t - impact;
                    s[2] += spec.amplitude * (PI * tau / FALL_SPIKE_SECONDS).sin();
                }
                samples.push(s);
            }
            // Sampling may straddle the crest; pin one sample to the peak.
            let peak = ((impact + FALL_SPIKE_SECONDS / 2.0) * rate).round() as usize;
            if let Some(s) = samples.get_mut(peak.min(n - 1)) {
                s[2] = s[2].max(1.0 + spec.amplitude);
            }
        }
        _ => unreachable!("accelerometer kinds only"),
    }
    for s in &mut samples {
        for v in s.iter_mut() {
            *v = clamp_g(*v);
        }
    }
    Ok(AccelTrace {
        rate_hz: rate,
        start_ms: 0,
        samples,
    })
}

/// A walking trace of `duration_s` seconds in which each listed whole second
/// is replaced by a one-second fall trace.
pub fn walking_with_falls(duration_s: usize, rate_hz: f64, fall_seconds: &[usize], seed: u64) -> Result<AccelTrace> {
    let mut trace = synth_accel(&TraceSpec::new(TraceKind::Walking, duration_s as f64, rate_hz, seed))?;
    let per_second = rate_hz.round() as usize;
    for (i, &sec) in fall_seconds.iter().enumerate() {
        if sec >= duration_s {
            return Err(SimError::TooShort(format!("fall second {sec} beyond a {duration_s} s trace")));
        }
        let fall = synth_accel(&TraceSpec::new(TraceKind::Fall, 1.0, rate_hz, seed ^ (0x9E37 + i as u64)))?;
        let start = sec * per_second;
        let end = (start + per_second).min(trace.samples.len());
        trace.samples[start..end].copy_from_slice(&fall.samples[..end - start]);
    }
    Ok(trace)
}

/// Tone mixtures for the voice harness: three partials drawn from
/// 150–400 Hz (`tone_low`) or 2–4 kHz (`tone_high`), each with a slow
/// amplitude envelope, plus white noise.
pub fn synth_audio(spec: &TraceSpec) -> Result<PcmAudio> {
    spec.expect(Modality::Audio, "audio")?;
    let rate = spec.rate_hz.round();
    let (lo, hi) = match spec.kind {
        TraceKind::ToneLow => (150.0, 400.0),
        _ => (2000.0, 4000.0),
    };
    let nyquist = rate / 2.0;
    let mut rng = Rng::derive(spec.seed, 2);
    let partials: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let f = rng.uniform(lo, hi).min(nyquist * 0.9);
            (f, rng.uniform(0.0, 2.0 * PI), rng.uniform(0.5, 3.0), rng.uniform(0.0, 2.0 * PI))
        })
        .collect();
    let n = spec.sample_count();
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let voiced: f64 = partials
                .iter()
                .map(|&(f, phase, env_hz, env_phase)| {
                    let envelope = 0.75 + 0.25 * (2.0 * PI * env_hz * t + env_phase).sin();
                    envelope * (2.0 * PI * f * t + phase).sin()
                })
                .sum();
            (spec.amplitude * voiced + rng.gaussian(0.0, 0.02)).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(PcmAudio::new(rate as u32, samples).expect("samples are clamped to [-1, 1]"))
}

/// An Archimedean spiral drawn outward from the tablet centre over
/// `duration_s`. The tremor variant adds an 8 Hz radial oscillation of
/// `amplitude`, positional jitter and several mid-drawing pen lifts; the
/// smooth variant only lifts the pen briefly at the start and end.
pub fn synth_strokes(spec: &TraceSpec) -> Result<Vec<PenStroke>> {
    spec.expect(Modality::Pen, "pen")?;
    let n = spec.sample_count();
    if n < 20 {
        return Err(SimError::TooShort(format!("{n} pen samples, need at least 20")));
    }
    let mut rng = Rng::derive(spec.seed, 3);
    let tremor = spec.kind == TraceKind::SpiralTremor;
    let turns = rng.uniform(2.5, 3.5);
    let radius = rng.uniform(0.3, 0.42);
    let rotation = rng.uniform(0.0, 2.0 * PI);
    let tremor_phase = rng.uniform(0.0, 2.0 * PI);
    let edge = (n / 25).max(1);
    let mut hover = vec![false; n];
    hover[..edge].fill(true);
    hover[n - edge..].fill(true);
    if tremor {
        let lifts = 5 + rng.below(3);
        for _ in 0..lifts {
            let len = (n / 20).max(2);
            let start = edge + rng.below(n - 2 * edge - len);
            hover[start..start + len].fill(true);
        }
    }
    let dt_ms = 1000.0 / spec.rate_hz;
    let mut points = Vec::with_capacity(n);
    for (i, &is_hover) in hover.iter().enumerate() {
        let u = i as f64 / (n - 1) as f64;
        let theta = 2.0 * PI * turns * u + rotation;
        let t_s = i as f64 / spec.rate_hz;
        let mut r = radius * (0.05 + 0.95 * u);
        let (mut x, mut y);
        if tremor {
            r += spec.amplitude * (2.0 * PI * TREMOR_HZ * t_s + tremor_phase).sin();
            x = 0.5 + r * theta.cos() + rng.gaussian(0.0, spec.amplitude * 0.4);
            y = 0.5 + r * theta.sin() + rng.gaussian(0.0, spec.amplitude * 0.4);
        } else {
            x = 0.5 + r * theta.cos() + rng.gaussian(0.0, 0.001);
            y = 0.5 + r * theta.sin() + rng.gaussian(0.0, 0.001);
        }
        if is_hover {
            // The pen drifts a little while lifted.
            x += 0.01;
            y += 0.01;
        }
        points.push(PenPoint {
            t_ms: i as f64 * dt_ms,
            x: x.clamp(0.0, 1.0),
            y: y.clamp(0.0, 1.0),
            state: if is_hover { PenState::Hover } else { PenState::Contact },
        });
    }
    Ok(vec![PenStroke::new(points).expect("timestamps increase and coordinates are clamped")])
}

/// Total Euclidean length of the pen path across all strokes.
pub fn path_length(strokes: &[PenStroke]) -> f64 {
    strokes
        .iter()
        .map(|s| {
            s.points()
                .windows(2)
                .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
                .sum::<f64>()
        })
        .sum()
}

/// Points in [-1, 1]² labelled by the side of a seeded line through the
/// origin, keeping only points at least `margin / 2` from the line. Classes
/// alternate so the set is balanced.
pub fn separable_points(n: usize, margin: f64, seed: u64) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut rng = Rng::derive(seed, 4);
    let angle = rng.uniform(0.0, 2.0 * PI);
    let normal = [angle.cos(), angle.sin()];
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while points.len() < n {
        let p = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        let side = p[0] * normal[0] + p[1] * normal[1];
        let want = points.len() % 2;
        if side.abs() < margin / 2.0 || usize::from(side > 0.0) != want {
            continue;
        }
        points.push(p);
        labels.push(want);
    }
    (points, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fall_trace_exceeds_three_g() {
        for seed in 0..20 {
            let t = synth_accel(&TraceSpec::new(TraceKind::Fall, 1.0, 50.0, seed)).unwrap();
            let peak = t
                .samples
                .iter()
                .map(|s| (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt())
                .fold(0.0, f64::max);
            assert!(peak >= 3.0, "seed {seed}: peak {peak}");
        }
    }

    #[test]
    fn equal_seeds_repeat() {
        let spec = TraceSpec::new(TraceKind::Walking, 3.0, 50.0, 11);
        assert_eq!(synth_accel(&spec).unwrap(), synth_accel(&spec).unwrap());
        let other = TraceSpec { seed: 12, ..spec };
        assert_ne!(synth_accel(&spec).unwrap(), synth_accel(&other).unwrap());
    }

    #[test]
    fn packets_cover_whole_seconds() {
        let t = synth_accel(&TraceSpec::new(TraceKind::Idle, 5.0, 50.0, 1)).unwrap();
        let p = t.packets(1.0);
        assert_eq!(p.len(), 5);
        assert_eq!(p[3].start_ms, 3000);
        let t = synth_accel(&TraceSpec::new(TraceKind::Idle, 5.5, 50.0, 1)).unwrap();
        assert_eq!(t.packets(1.0).len(), 5);
    }

    #[test]
    fn spec_validation() {
        assert!(synth_accel(&TraceSpec::new(TraceKind::Walking, 0.0, 50.0, 0)).is_err());
        assert!(synth_accel(&TraceSpec::new(TraceKind::Walking, 1.0, 5.0, 0)).is_err());
        assert!(synth_accel(&TraceSpec::new(TraceKind::ToneLow, 1.0, 50.0, 0)).is_err());
        assert!(synth_accel(&TraceSpec::new(TraceKind::Fall, 0.3, 50.0, 0)).is_err());
        assert_eq!("spiral_tremor".parse::<TraceKind>().unwrap(), TraceKind::SpiralTremor);
        assert!("jog".parse::<TraceKind>().is_err());
    }

    #[test]
    fn injected_falls_replace_whole_seconds() {
        let t = walking_with_falls(10, 50.0, &[4, 5], 3).unwrap();
        assert_eq!(t.samples.len(), 500);
        let peak = |s: &[[f64; 3]]| s.iter().map(|v| v[2]).fold(f64::MIN, f64::max);
        assert!(peak(&t.samples[200..300]) >= 3.0);
        assert!(peak(&t.samples[..200]) < 2.0);
    }

    #[test]
    fn separable_points_respect_margin() {
        let (p, l) = separable_points(100, 0.4, 5);
        assert_eq!(p.len(), 100);
        assert_eq!(l.iter().filter(|&&c| c == 1).count(), 50);
    }
}
