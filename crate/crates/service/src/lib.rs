//! HTTP service for ward monitoring: a patient registry, per-second
//! accelerometer ingestion with activity classification, fall alerts for
//! at-risk patients, and JSON-lines persistence. Also holds the replay
//! client that plays simulated traces against a running server.

use std::path::PathBuf;

pub mod app;
pub mod config;
pub mod http;
pub mod replay;
pub mod store;
pub mod types;

pub use app::{ApiError, App};
pub use config::ServiceConfig;
pub use http::{build_app, router, run, spawn, RunningServer};
pub use replay::{replay, ReplayOptions, ReplayReport};
pub use store::{Recovered, Store, StoreError};
pub use types::{AccelPacket, ActivityEvent, Alert, EventContext, IngestResponse, NewPatient, PatientRecord};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("model {}: {reason}", path.display())]
    Model { path: PathBuf, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("recovery: {0}")]
    Recovery(String),
    #[error("cannot bind {addr}: {reason}")]
    Bind { addr: String, reason: String },
}
