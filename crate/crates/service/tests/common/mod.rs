#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use wardsense_core::nn::save_model;
use wardsense_core::pipelines::synthetic::{activity_config, activity_records};
use wardsense_core::pipelines::{train_activity, Arch, LabeledWindowSet, Manifest, WindowConfig};
use wardsense_core::simulator::{synth_accel, TraceKind, TraceSpec};
use wardsense_service::{build_app, spawn, AccelPacket, RunningServer, ServiceConfig};

/// A three-class activity model, trained once per test binary.
pub fn model_path() -> &'static Path {
    static PATH: OnceLock<PathBuf> = OnceLock::new();
    PATH.get_or_init(|| {
        let records = activity_records([80, 80, 80], 11).unwrap();
        let set =
            LabeledWindowSet::from_records(&records, &Manifest::synthetic_three_class(), &WindowConfig::default())
                .unwrap();
        let out = train_activity(&set, &activity_config(11), Arch::OneD).unwrap();
        let dir = tempfile::tempdir().unwrap().keep();
        let path = dir.join("activity.model");
        save_model(&out.model, &path).unwrap();
        path
    })
}

pub fn config(data_dir: &Path) -> ServiceConfig {
    ServiceConfig {
        data_dir: data_dir.to_path_buf(),
        port: 0,
        model: model_path().to_path_buf(),
        heartbeat_seconds: 0.3,
        ..ServiceConfig::default()
    }
}

pub async fn start(data_dir: &Path) -> RunningServer {
    let cfg = config(data_dir);
    let app = build_app(&cfg).unwrap();
    spawn(app, "127.0.0.1", 0, Duration::from_secs_f64(cfg.heartbeat_seconds))
        .await
        .unwrap()
}

pub fn packet(kind: TraceKind, t0: i64, seed: u64) -> AccelPacket {
    let trace = synth_accel(&TraceSpec::new(kind, 1.0, 50.0, seed)).unwrap();
    AccelPacket {
        patient_id: None,
        t0,
        rate_hz: 50.0,
        samples: trace.samples,
        location: None,
    }
}
