mod common;

use std::time::Duration;

use common::{packet, start};
use reqwest::StatusCode;
use serde_json::{json, Value};
use wardsense_core::pipelines::Group;
use wardsense_core::simulator::{walking_with_falls, TraceKind};
use wardsense_service::{replay, ActivityEvent, Alert, IngestResponse, PatientRecord, ReplayOptions};

async fn register(client: &reqwest::Client, url: &str, name: &str, risk: bool) -> PatientRecord {
    let r = client
        .post(format!("{url}/v1/patients"))
        .json(&json!({ "name": name, "fall_risk": risk }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::CREATED);
    r.json().await.unwrap()
}

async fn send(client: &reqwest::Client, url: &str, id: &str, body: &impl serde::Serialize) -> (StatusCode, Value) {
    let r = client
        .post(format!("{url}/v1/patients/{id}/accel"))
        .json(body)
        .send()
        .await
        .unwrap();
    (r.status(), r.json().await.unwrap())
}

#[tokio::test]
async fn registration_contract() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path()).await;
    let url = server.url();
    let client = reqwest::Client::new();
    let a = register(&client, &url, "A", true).await;
    assert!(a.fall_risk);
    let b = register(&client, &url, "B", false).await;
    assert_ne!(a.patient_id, b.patient_id);

    let post = |body: Value| {
        let client = client.clone();
        let url = url.clone();
        async move {
            client
                .post(format!("{url}/v1/patients"))
                .json(&body)
                .send()
                .await
                .unwrap()
                .status()
        }
    };
    assert_eq!(post(json!({ "name": "", "fall_risk": true })).await, StatusCode::BAD_REQUEST);
    assert_eq!(post(json!({ "fall_risk": true })).await, StatusCode::BAD_REQUEST);
    assert_eq!(post(json!({ "patient_id": "bed-4", "name": "C" })).await, StatusCode::CREATED);
    assert_eq!(post(json!({ "patient_id": "bed-4", "name": "D" })).await, StatusCode::CONFLICT);
    let r = client.post(format!("{url}/v1/patients")).body("{not json").send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let got: PatientRecord = client
        .get(format!("{url}/v1/patients/bed-4"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(got.name, "C");
    server.kill().await;
}

#[tokio::test]
async fn packet_validation_names_the_violation() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path()).await;
    let url = server.url();
    let client = reqwest::Client::new();
    let p = register(&client, &url, "A", true).await;

    let mut short = packet(TraceKind::Walking, 0, 1);
    short.samples.truncate(10);
    let (status, body) = send(&client, &url, &p.patient_id, &short).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("sample count"), "{body}");

    let mut slow = packet(TraceKind::Walking, 0, 1);
    slow.rate_hz = 5.0;
    slow.samples.truncate(5);
    let (status, body) = send(&client, &url, &p.patient_id, &slow).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("rate_hz"), "{body}");

    let mut loud = packet(TraceKind::Walking, 0, 1);
    loud.samples[3][0] = 40.0;
    assert_eq!(send(&client, &url, &p.patient_id, &loud).await.0, StatusCode::BAD_REQUEST);

    let mut other = packet(TraceKind::Walking, 0, 1);
    other.patient_id = Some("someone-else".into());
    assert_eq!(send(&client, &url, &p.patient_id, &other).await.0, StatusCode::BAD_REQUEST);

    // 46 samples at 50 Hz is within ±10%.
    let mut near = packet(TraceKind::Walking, 0, 1);
    near.samples.truncate(46);
    assert_eq!(send(&client, &url, &p.patient_id, &near).await.0, StatusCode::ACCEPTED);
    let (status, _) = send(&client, &url, &p.patient_id, &packet(TraceKind::Idle, -5, 2)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _) = send(&client, &url, "nobody", &packet(TraceKind::Walking, 0, 1)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    server.kill().await;
}

#[tokio::test]
async fn walking_is_adl_and_three_falls_raise_one_alert() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path()).await;
    let url = server.url();
    let client = reqwest::Client::new();
    let risk = register(&client, &url, "Risk", true).await;
    let calm = register(&client, &url, "Calm", false).await;

    let (status, body) = send(&client, &url, &risk.patient_id, &packet(TraceKind::Walking, 0, 3)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let r: IngestResponse = serde_json::from_value(body).unwrap();
    assert_eq!(r.event.group, Group::Adl);
    assert_eq!(r.event.label, "walking");
    assert!(r.alert.is_none());

    let mut alerts = Vec::new();
    for i in 1..=3 {
        for p in [&risk, &calm] {
            let (_, body) = send(&client, &url, &p.patient_id, &packet(TraceKind::Fall, i * 1000, 40 + i as u64)).await;
            let r: IngestResponse = serde_json::from_value(body).unwrap();
            assert_eq!(r.event.group, Group::Fall);
            if let Some(a) = r.alert {
                alerts.push((i, a));
            }
        }
    }
    assert_eq!(alerts.len(), 1, "{alerts:?}");
    let (at, alert) = &alerts[0];
    assert!(*at <= 3);
    assert_eq!(alert.patient_id, risk.patient_id);
    assert_eq!(alert.label, "fall");
    assert_eq!(alert.alert_id, 1);
    assert!(alert.window.len() <= 3 && alert.window.last().unwrap().start_ms == at * 1000);

    let listed: Vec<Alert> = client
        .get(format!("{url}/v1/alerts?since_id=0"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(listed, vec![alert.clone()]);
    let after: Vec<Alert> = client
        .get(format!("{url}/v1/alerts?since_id=1"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert!(after.is_empty());
    server.kill().await;
}

#[tokio::test]
async fn event_queries() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path()).await;
    let url = server.url();
    let client = reqwest::Client::new();
    let p = register(&client, &url, "A", false).await;
    for (i, kind) in [TraceKind::Idle, TraceKind::Walking, TraceKind::Idle].into_iter().enumerate() {
        let mut pk = packet(kind, 1000 * i as i64, i as u64);
        pk.location = Some("ward-3".into());
        assert_eq!(send(&client, &url, &p.patient_id, &pk).await.0, StatusCode::ACCEPTED);
    }
    let get = |query: &'static str| {
        let client = client.clone();
        let url = format!("{url}/v1/patients/{}/events{query}", p.patient_id);
        async move { client.get(url).send().await.unwrap() }
    };
    let all: Vec<ActivityEvent> = get("?since=0").await.json().await.unwrap();
    assert_eq!(all.len(), 3);
    assert!(all.windows(2).all(|w| w[0].start_ms < w[1].start_ms));
    assert!(all.iter().all(|e| e.end_ms > e.start_ms && e.posterior_max > 0.0 && e.posterior_max <= 1.0));
    assert_eq!(all[0].name, "A");
    assert_eq!(all[0].context.location.as_deref(), Some("ward-3"));
    let late: Vec<ActivityEvent> = get("?since=1000").await.json().await.unwrap();
    assert_eq!(late.len(), 2);
    let one: Vec<ActivityEvent> = get("?since=0&limit=1").await.json().await.unwrap();
    assert_eq!(one, all[..1].to_vec());
    let none: Vec<ActivityEvent> = get("?since=99999").await.json().await.unwrap();
    assert!(none.is_empty());
    let r = client.get(format!("{url}/v1/patients/ghost/events")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    server.kill().await;
}

async fn read_line(resp: &mut reqwest::Response, buf: &mut Vec<u8>) -> Value {
    loop {
        if let Some(pos) = buf.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = buf.drain(..=pos).collect();
            return serde_json::from_slice(&line).unwrap();
        }
        let chunk = tokio::time::timeout(Duration::from_secs(10), resp.chunk())
            .await
            .expect("stream stalled")
            .unwrap()
            .expect("stream ended");
        buf.extend_from_slice(&chunk);
    }
}

#[tokio::test]
async fn alert_stream_delivers_each_alert_once_with_heartbeats() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path()).await;
    let url = server.url();
    let client = reqwest::Client::new();
    let p = register(&client, &url, "A", true).await;
    let mut stream = client.get(format!("{url}/v1/alerts/stream")).send().await.unwrap();
    assert_eq!(stream.status(), StatusCode::OK);
    let mut buf = Vec::new();

    let hb = read_line(&mut stream, &mut buf).await;
    assert!(hb["heartbeat"].as_i64().unwrap() > 0);

    for i in 0..3 {
        send(&client, &url, &p.patient_id, &packet(TraceKind::Fall, i * 1000, 70 + i as u64)).await;
    }
    let mut seen = Vec::new();
    while seen.len() < 3 {
        let v = read_line(&mut stream, &mut buf).await;
        if v.get("heartbeat").is_some() {
            seen.push(None);
        } else {
            let a: Alert = serde_json::from_value(v).unwrap();
            assert!(seen.iter().flatten().all(|x: &Alert| x.alert_id != a.alert_id));
            seen.push(Some(a));
        }
    }
    let alerts: Vec<Alert> = seen.into_iter().flatten().collect();
    assert_eq!(alerts.len(), 1);
    assert_eq!(alerts[0].patient_id, p.patient_id);
    server.kill().await;
}

#[tokio::test]
async fn restart_restores_events_and_alert_counter() {
    let dir = tempfile::tempdir().unwrap();
    let client = reqwest::Client::new();
    let (id, before) = {
        let server = start(dir.path()).await;
        let url = server.url();
        let p = register(&client, &url, "A", true).await;
        for i in 0..3 {
            send(&client, &url, &p.patient_id, &packet(TraceKind::Fall, i * 1000, 90 + i as u64)).await;
        }
        let events: Vec<ActivityEvent> = client
            .get(format!("{url}/v1/patients/{}/events?since=0", p.patient_id))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        server.kill().await;
        (p.patient_id, events)
    };
    assert_eq!(before.len(), 3);

    let server = start(dir.path()).await;
    let url = server.url();
    let after: Vec<ActivityEvent> = client
        .get(format!("{url}/v1/patients/{id}/events?since=0"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(after, before);
    // The fall episode is still in progress, so no second alert yet.
    let (_, body) = send(&client, &url, &id, &packet(TraceKind::Fall, 3000, 93)).await;
    assert!(body["alert"].is_null());
    for i in 4..8 {
        send(&client, &url, &id, &packet(TraceKind::Walking, i * 1000, i as u64)).await;
    }
    let (_, _) = send(&client, &url, &id, &packet(TraceKind::Fall, 8000, 98)).await;
    let (_, body) = send(&client, &url, &id, &packet(TraceKind::Fall, 9000, 99)).await;
    let a: Alert = serde_json::from_value(body["alert"].clone()).unwrap();
    assert_eq!(a.alert_id, 2);
    let other = register(&client, &url, "B", false).await;
    assert_ne!(other.patient_id, id);
    server.kill().await;
}

#[tokio::test]
async fn torn_event_line_is_dropped_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let client = reqwest::Client::new();
    let server = start(dir.path()).await;
    let url = server.url();
    let p = register(&client, &url, "A", false).await;
    for i in 0..5 {
        send(&client, &url, &p.patient_id, &packet(TraceKind::Idle, i * 1000, i as u64)).await;
    }
    server.kill().await;

    let log = dir.path().join("events.jsonl");
    let text = std::fs::read_to_string(&log).unwrap();
    std::fs::write(&log, &text[..text.len() - 25]).unwrap();
    let server = start(dir.path()).await;
    let events: Vec<ActivityEvent> = client
        .get(format!("{}/v1/patients/{}/events", server.url(), p.patient_id))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(events.len(), 4);
    server.kill().await;
}

#[tokio::test]
async fn replay_reports_packets_events_and_alerts() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path()).await;
    let url = server.url();
    let client = reqwest::Client::new();
    let p = register(&client, &url, "A", true).await;

    let walk = walking_with_falls(10, 50.0, &[], 5).unwrap();
    let report = replay(&walk, &ReplayOptions::new(&url, &p.patient_id)).await;
    assert_eq!(report.error, None);
    assert_eq!((report.packets_sent, report.events, report.stream_alerts.len()), (10, 10, 0));
    let again = replay(&walk, &ReplayOptions::new(&url, &p.patient_id)).await;
    assert_eq!((again.error, again.events), (None, 10));

    let q = register(&client, &url, "B", true).await;
    let falls = walking_with_falls(10, 50.0, &[4, 5, 6], 5).unwrap();
    let report = replay(&falls, &ReplayOptions::new(&url, &q.patient_id)).await;
    assert_eq!(report.error, None);
    assert_eq!(report.alert_packets.len(), 1);
    assert!(report.alert_packets[0] <= 6);
    assert_eq!(report.stream_alerts.len(), 1);

    let five = walking_with_falls(5, 50.0, &[], 6).unwrap();
    let ghost = replay(&five, &ReplayOptions::new(&url, "ghost")).await;
    assert_eq!(ghost.events, 0);
    let err = ghost.error.unwrap();
    assert!(err.starts_with("404") && err.contains("unknown patient `ghost`"), "{err}");
    server.kill().await;
}

#[tokio::test]
async fn replay_gives_up_on_an_unreachable_server() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let trace = walking_with_falls(5, 50.0, &[], 1).unwrap();
    let report = replay(&trace, &ReplayOptions::new(format!("http://{addr}"), "p")).await;
    assert_eq!(report.packets_total, 5);
    assert_eq!(report.packets_sent, 0);
    assert!(report.error.unwrap().contains("after 3 retries"));
}
