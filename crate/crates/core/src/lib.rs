//! Sensor analytics for ward monitoring: a from-scratch CNN engine, signal
//! preprocessing, multi-level information fusion, the activity / voice /
//! handwriting pipelines and a deterministic trace simulator.

pub mod dsp;
pub mod fusion;
pub mod nn;
pub mod pipelines;
pub mod rng;
pub mod simulator;

#[cfg(any(test, feature = "oracles"))]
pub mod oracle;
