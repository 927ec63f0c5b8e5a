//! Plays an accelerometer trace against a running server, one packet per
//! second of trace, the way a patient's phone would.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokio::sync::Notify;
use wardsense_core::simulator::AccelTrace;

use crate::app::now_ms;
use crate::types::{AccelPacket, ActivityEvent, Alert, IngestResponse};

pub const DEFAULT_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOptions {
    pub base_url: String,
    pub patient_id: String,
    /// Packets per wall-clock second; 0 sends as fast as possible.
    pub speed: f64,
    /// Added to trace-relative timestamps; the current time when `None`.
    pub t0_ms: Option<i64>,
    pub retries: usize,
    /// How long to wait for the stream to deliver alerts seen in responses.
    pub stream_grace: Duration,
    pub location: Option<String>,
}

impl ReplayOptions {
    pub fn new(base_url: impl Into<String>, patient_id: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            patient_id: patient_id.into(),
            speed: 0.0,
            t0_ms: None,
            retries: DEFAULT_RETRIES,
            stream_grace: Duration::from_secs(5),
            location: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub patient_id: String,
    pub packets_total: usize,
    pub packets_sent: usize,
    pub events: usize,
    pub labels: Vec<String>,
    /// Zero-based packet indices whose response carried an alert.
    pub alert_packets: Vec<usize>,
    /// Alerts for this patient read from the alert stream.
    pub stream_alerts: Vec<Alert>,
    /// Set when the replay stopped early.
    pub error: Option<String>,
}

impl ReplayReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "patient {}: {}/{} packets sent, {} events, {} alerts in responses, {} alerts on stream",
            self.patient_id,
            self.packets_sent,
            self.packets_total,
            self.events,
            self.alert_packets.len(),
            self.stream_alerts.len()
        );
        if let Some(e) = &self.error {
            s.push_str(&format!("\naborted: {e}"));
        }
        s
    }
}

#[derive(Debug, Default)]
struct StreamLog {
    alerts: Vec<Alert>,
    closed: Option<String>,
}

async fn with_retries<T, F, Fut>(retries: usize, mut attempt: F) -> Result<T, String>
where
    F: FnMut() -> Fut,
    Fut: std::future::Future<Output = Result<T, reqwest::Error>>,
{
    let mut last = String::new();
    for i in 0..=retries {
        match attempt().await {
            Ok(v) => return Ok(v),
            Err(e) if e.is_connect() || e.is_timeout() => {
                last = e.to_string();
                if i < retries {
                    tokio::time::sleep(Duration::from_millis(200 * (i as u64 + 1))).await;
                }
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    Err(format!("gave up after {retries} retries: {last}"))
}

/// End of the patient's newest event at or after `now`, so a replay never
/// starts behind an earlier one that ran ahead of the clock.
async fn latest_end(client: &reqwest::Client, opts: &ReplayOptions, now: i64) -> Result<Option<i64>, String> {
    let url = format!("{}/v1/patients/{}/events", opts.base_url, opts.patient_id);
    let query = [("since", now.to_string()), ("limit", usize::MAX.to_string())];
    let resp = with_retries(opts.retries, || client.get(&url).query(&query).send()).await?;
    let status = resp.status();
    let text = resp.text().await.map_err(|e| e.to_string())?;
    if !status.is_success() {
        return Err(format!("{status}: {text}"));
    }
    let events: Vec<ActivityEvent> = serde_json::from_str(&text).map_err(|e| format!("unreadable events: {e}"))?;
    Ok(events.last().map(|e| e.end_ms))
}

/// Sends `trace` as consecutive one-second packets and collects what came
/// back. Connection failures are retried; any other failure, including a
/// non-2xx response (quoted verbatim), ends the replay with a partial report.
pub async fn replay(trace: &AccelTrace, opts: &ReplayOptions) -> ReplayReport {
    let packets = trace.packets(1.0);
    let mut report = ReplayReport {
        patient_id: opts.patient_id.clone(),
        packets_total: packets.len(),
        ..Default::default()
    };
    let client = match reqwest::Client::builder().timeout(Duration::from_secs(30)).build() {
        Ok(c) => c,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    let stream_client = match reqwest::Client::builder().build() {
        Ok(c) => c,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };

    let stream_url = format!("{}/v1/alerts/stream", opts.base_url);
    let stream = match with_retries(opts.retries, || stream_client.get(&stream_url).send()).await {
        Ok(r) if r.status().is_success() => r,
        Ok(r) => {
            let status = r.status();
            report.error = Some(format!("{status}: {}", r.text().await.unwrap_or_default()));
            return report;
        }
        Err(e) => {
            report.error = Some(e);
            return report;
        }
    };
    let log = Arc::new(Mutex::new(StreamLog::default()));
    let notify = Arc::new(Notify::new());
    let reader = {
        let (log, notify) = (log.clone(), notify.clone());
        let patient = opts.patient_id.clone();
        tokio::spawn(async move {
            let mut stream = stream;
            let mut buf: Vec<u8> = Vec::new();
            loop {
                match stream.chunk().await {
                    Ok(Some(bytes)) => {
                        buf.extend_from_slice(&bytes);
                        while let Some(pos) = buf.iter().position(|&b| b == b'\n') {
                            let line: Vec<u8> = buf.drain(..=pos).collect();
                            if let Ok(alert) = serde_json::from_slice::<Alert>(&line) {
                                if alert.patient_id == patient {
                                    log.lock().expect("stream log").alerts.push(alert);
                                    notify.notify_waiters();
                                }
                            }
                        }
                    }
                    Ok(None) => {
                        log.lock().expect("stream log").closed = Some("alert stream closed".into());
                        break;
                    }
                    Err(e) => {
                        log.lock().expect("stream log").closed = Some(e.to_string());
                        break;
                    }
                }
            }
            notify.notify_waiters();
        })
    };

    let url = format!("{}/v1/patients/{}/accel", opts.base_url, opts.patient_id);
    let base = match opts.t0_ms {
        Some(t) => t,
        None => {
            let now = now_ms();
            match latest_end(&client, opts, now).await {
                Ok(end) => end.map_or(now, |e| e.max(now)),
                Err(e) => {
                    reader.abort();
                    report.error = Some(e);
                    return report;
                }
            }
        }
    };
    let started = Instant::now();
    for (i, p) in packets.iter().enumerate() {
        if opts.speed > 0.0 {
            let due = started + Duration::from_secs_f64(i as f64 / opts.speed);
            tokio::time::sleep_until(due.into()).await;
        }
        let body = AccelPacket {
            patient_id: Some(opts.patient_id.clone()),
            t0: base + p.start_ms,
            rate_hz: p.rate_hz,
            samples: p.samples.clone(),
            location: opts.location.clone(),
        };
        let resp = match with_retries(opts.retries, || client.post(&url).json(&body).send()).await {
            Ok(r) => r,
            Err(e) => {
                report.error = Some(e);
                break;
            }
        };
        report.packets_sent += 1;
        let status = resp.status();
        let text = resp.text().await.unwrap_or_default();
        if !status.is_success() {
            report.error = Some(format!("{status}: {text}"));
            break;
        }
        match serde_json::from_str::<IngestResponse>(&text) {
            Ok(r) => {
                report.events += 1;
                report.labels.push(r.event.label);
                if r.alert.is_some() {
                    report.alert_packets.push(i);
                }
            }
            Err(e) => {
                report.error = Some(format!("unreadable response: {e}"));
                break;
            }
        }
    }

    let deadline = Instant::now() + opts.stream_grace;
    loop {
        let notified = notify.notified();
        {
            let log = log.lock().expect("stream log");
            if log.alerts.len() >= report.alert_packets.len() || log.closed.is_some() {
                break;
            }
        }
        if tokio::time::timeout_at(deadline.into(), notified).await.is_err() {
            break;
        }
    }
    reader.abort();
    let log = log.lock().expect("stream log");
    report.stream_alerts = log.alerts.clone();
    if report.error.is_none() && report.stream_alerts.len() < report.alert_packets.len() {
        report.error = Some(format!(
            "{} alerts in responses but {} on the stream{}",
            report.alert_packets.len(),
            report.stream_alerts.len(),
            log.closed.as_deref().map(|c| format!(" ({c})")).unwrap_or_default()
        ));
    }
    report
}
