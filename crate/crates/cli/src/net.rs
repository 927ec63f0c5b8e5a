use std::io::Write;

use anyhow::Context;
use wardsense_core::pipelines::read_activity_records;
use wardsense_core::simulator::AccelTrace;
use wardsense_service::{ReplayOptions, ServiceConfig};

use crate::args::{ReplayArgs, ServeArgs};
use crate::usage;

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("cannot start the async runtime")
}

pub fn serve(a: &ServeArgs) -> anyhow::Result<()> {
    let cfg = match &a.config {
        Some(path) => {
            if !path.is_file() {
                return usage(format!("--config {}: no such file", path.display()));
            }
            ServiceConfig::load(path).map_err(|e| crate::Usage(e.to_string()))?
        }
        None => {
            let mut cfg = ServiceConfig::default();
            cfg.apply_env(|k| std::env::var(k).ok())
                .map_err(|e| crate::Usage(e.to_string()))?;
            cfg
        }
    };
    runtime()?.block_on(wardsense_service::run(&cfg, |addr| {
        println!("listening on http://{addr}");
        println!("port {}", addr.port());
        let _ = std::io::stdout().flush();
    }))?;
    Ok(())
}

/// Concatenates every record of an accelerometer JSONL file into one trace.
fn load_trace(path: &std::path::Path) -> anyhow::Result<AccelTrace> {
    let records = read_activity_records(path)?;
    if records.is_empty() {
        anyhow::bail!("{}: no records", path.display());
    }
    let rate = records[0].rate_hz;
    if let Some(r) = records.iter().find(|r| r.rate_hz != rate) {
        anyhow::bail!("{}: mixed sample rates {rate} and {} Hz", path.display(), r.rate_hz);
    }
    Ok(AccelTrace {
        rate_hz: rate,
        start_ms: 0,
        samples: records.into_iter().flat_map(|r| r.samples).collect(),
    })
}

pub fn replay(a: &ReplayArgs, deterministic: bool) -> anyhow::Result<()> {
    if !a.trace.is_file() {
        return usage(format!("--trace {}: no such file", a.trace.display()));
    }
    if !(a.speed >= 0.0 && a.speed.is_finite()) {
        return usage("--speed must be zero or positive");
    }
    if !(a.url.starts_with("http://") || a.url.starts_with("https://")) {
        return usage(format!("--url must start with http:// or https://, got `{}`", a.url));
    }
    let trace = load_trace(&a.trace)?;
    let mut opts = ReplayOptions::new(&a.url, &a.patient);
    opts.speed = a.speed;
    if deterministic {
        opts.t0_ms = Some(0);
    }
    let report = runtime()?.block_on(wardsense_service::replay(&trace, &opts));
    println!("{}", report.summary());
    if let Some(path) = &a.report {
        let json = serde_json::to_string_pretty(&report)?;
        std::fs::write(path, json).with_context(|| format!("cannot write {}", path.display()))?;
    }
    match &report.error {
        Some(e) => anyhow::bail!("replay stopped: {e}"),
        None => Ok(()),
    }
}
