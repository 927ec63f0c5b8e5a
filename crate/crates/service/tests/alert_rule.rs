mod common;

use proptest::prelude::*;
use wardsense_core::fusion::SmoothingRule;
use wardsense_core::simulator::TraceKind;
use wardsense_service::{build_app, ActivityEvent, App, NewPatient};

/// The alert rule written out from its definition: an alert fires for an
/// at-risk patient on the first packet at which at least half (rounded up)
/// of the last `k` events are confident falls.
fn expected_alerts(events: &[ActivityEvent], fall_risk: bool, k: usize, threshold: f64) -> Vec<usize> {
    let confident_fall = |e: &ActivityEvent| e.label == "fall" && e.posterior_max >= threshold;
    let mut out = Vec::new();
    let mut was = false;
    for i in 0..events.len() {
        let lo = (i + 1).saturating_sub(k);
        let hits = events[lo..=i].iter().filter(|e| confident_fall(e)).count();
        let now = 2 * hits >= k;
        if now && !was && fall_risk {
            out.push(i);
        }
        was = now;
    }
    out
}

const KINDS: [TraceKind; 3] = [TraceKind::Walking, TraceKind::Idle, TraceKind::Fall];

fn open(dir: &std::path::Path, rule: SmoothingRule) -> App {
    let mut cfg = common::config(dir);
    cfg.alert = rule;
    build_app(&cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn alerts_follow_the_rule_and_survive_restart(
        seq in proptest::collection::vec((0usize..3, any::<bool>()), 1..30),
        risk in proptest::collection::vec(any::<bool>(), 2),
        k in 1usize..6,
        threshold in 0.5f64..0.99,
        split in 0usize..30,
    ) {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let rule = SmoothingRule::new(k, threshold).unwrap();
        let split = split.min(seq.len());
        let (events, alerts) = rt.block_on(async {
            let mut app = open(dir.path(), rule);
            let ids: Vec<String> = risk
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    app.register(NewPatient { patient_id: None, name: format!("P{i}"), fall_risk: r })
                        .unwrap()
                        .patient_id
                })
                .collect();
            let mut alerts = vec![Vec::new(); ids.len()];
            let mut counts = vec![0usize; ids.len()];
            for (n, &(kind, which)) in seq.iter().enumerate() {
                if n == split {
                    drop(app);
                    app = open(dir.path(), rule);
                }
                let p = usize::from(which);
                let pk = common::packet(KINDS[kind], 1000 * n as i64, n as u64);
                let r = app.ingest(&ids[p], pk).await.unwrap();
                if let Some(a) = r.alert {
                    alerts[p].push((counts[p], a.alert_id));
                }
                counts[p] += 1;
            }
            let mut events = Vec::new();
            for id in &ids {
                events.push(app.events(id, i64::MIN, usize::MAX).await.unwrap());
            }
            (events, alerts)
        });
        let mut ids_seen = Vec::new();
        for p in 0..2 {
            let got: Vec<usize> = alerts[p].iter().map(|a| a.0).collect();
            prop_assert_eq!(got, expected_alerts(&events[p], risk[p], k, threshold));
            prop_assert_eq!(events[p].len(), seq.iter().filter(|s| usize::from(s.1) == p).count());
            prop_assert!(events[p].windows(2).all(|w| w[0].start_ms < w[1].start_ms));
            ids_seen.extend(alerts[p].iter().map(|a| a.1));
        }
        ids_seen.sort();
        prop_assert_eq!(ids_seen, (1..).take(alerts[0].len() + alerts[1].len()).collect::<Vec<u64>>());
    }
}
