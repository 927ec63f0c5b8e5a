use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use tokio::sync::watch;
use wardsense_core::dsp::AccelWindow;
use wardsense_core::fusion::{temporal_smooth, Decision, SmoothingRule};
use wardsense_core::pipelines::ActivityClassifier;

use crate::store::{Recovered, Store};
use crate::types::{AccelPacket, ActivityEvent, Alert, EventContext, IngestResponse, NewPatient, PatientRecord};
use crate::ServiceError;

pub const MIN_RATE_HZ: f64 = 10.0;
pub const MAX_RATE_HZ: f64 = 500.0;
pub const DEFAULT_EVENT_LIMIT: usize = 100;

/// Request-level failures, each mapped to an HTTP status.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown patient `{0}`")]
    NotFound(String),
    #[error("patient id `{0}` is already registered")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

pub fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

#[derive(Debug)]
struct PatientState {
    record: PatientRecord,
    events: Vec<ActivityEvent>,
    history: VecDeque<Decision>,
    fired: bool,
}

/// Everything written to disk goes through here, one writer at a time.
#[derive(Debug)]
struct Journal {
    store: Store,
    alerts: Vec<Alert>,
    last_alert_id: u64,
    patient_seq: u64,
}

/// Shared server state. Packets for one patient are handled in arrival
/// order under that patient's lock; different patients proceed in parallel.
pub struct App {
    classifier: ActivityClassifier,
    trigger: Vec<usize>,
    rule: SmoothingRule,
    window_seconds: f64,
    patients: RwLock<HashMap<String, Arc<tokio::sync::Mutex<PatientState>>>>,
    journal: Mutex<Journal>,
    latest_alert: watch::Sender<u64>,
}

impl std::fmt::Debug for App {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("App").field("rule", &self.rule).finish_non_exhaustive()
    }
}

/// Pushes `d` onto a bounded history and applies the smoothing rule.
/// Returns whether the rule fires now.
fn advance(history: &mut VecDeque<Decision>, d: Decision, rule: &SmoothingRule, trigger: &[usize]) -> bool {
    history.push_back(d);
    while history.len() > rule.k {
        history.pop_front();
    }
    let slice: Vec<Decision> = history.iter().cloned().collect();
    temporal_smooth(&slice, rule, trigger).map(|s| s.fired).unwrap_or(false)
}

impl App {
    /// Builds the state from what `store` recovered, replaying every event
    /// through the smoothing rule so alert edges continue where they left off.
    pub fn new(
        classifier: ActivityClassifier,
        rule: SmoothingRule,
        window_seconds: f64,
        store: Store,
        recovered: Recovered,
    ) -> Result<Self, ServiceError> {
        rule.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        let trigger = classifier.fall_indices();
        let classes = classifier.model().num_classes();
        let mut patients: HashMap<String, PatientState> = HashMap::new();
        for record in recovered.patients {
            patients.insert(
                record.patient_id.clone(),
                PatientState {
                    record,
                    events: Vec::new(),
                    history: VecDeque::new(),
                    fired: false,
                },
            );
        }
        for event in recovered.events {
            let state = patients
                .get_mut(&event.patient_id)
                .ok_or_else(|| ServiceError::Recovery(format!("event for unregistered patient `{}`", event.patient_id)))?;
            if event.posterior.len() != classes {
                return Err(ServiceError::Recovery(format!(
                    "event at {} ms has {} posteriors but the model has {classes} classes",
                    event.start_ms,
                    event.posterior.len()
                )));
            }
            let d = Decision::new("activity", event.posterior.clone(), 1.0, event.start_ms)
                .map_err(|e| ServiceError::Recovery(e.to_string()))?;
            state.fired = advance(&mut state.history, d, &rule, &trigger);
            state.events.push(event);
        }
        let last_alert_id = recovered.alerts.iter().map(|a| a.alert_id).max().unwrap_or(0);
        let patient_seq = patients.len() as u64;
        let (latest_alert, _) = watch::channel(last_alert_id);
        Ok(Self {
            classifier,
            trigger,
            rule,
            window_seconds,
            patients: RwLock::new(
                patients
                    .into_iter()
                    .map(|(k, v)| (k, Arc::new(tokio::sync::Mutex::new(v))))
                    .collect(),
            ),
            journal: Mutex::new(Journal {
                store,
                alerts: recovered.alerts,
                last_alert_id,
                patient_seq,
            }),
            latest_alert,
        })
    }

    pub fn rule(&self) -> SmoothingRule {
        self.rule
    }

    pub fn classifier(&self) -> &ActivityClassifier {
        &self.classifier
    }

    pub fn last_alert_id(&self) -> u64 {
        *self.latest_alert.borrow()
    }

    /// Receives the newest alert id each time one fires.
    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.latest_alert.subscribe()
    }

    fn patient(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<PatientState>>, ApiError> {
        self.patients
            .read()
            .expect("patient map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    pub fn register(&self, req: NewPatient) -> Result<PatientRecord, ApiError> {
        if req.name.trim().is_empty() {
            return Err(ApiError::BadRequest("name must be non-empty".into()));
        }
        if let Some(id) = &req.patient_id {
            if id.trim().is_empty() || id.contains('/') {
                return Err(ApiError::BadRequest(format!("invalid patient id `{id}`")));
            }
        }
        let mut map = self.patients.write().expect("patient map lock");
        let mut journal = self.journal.lock().expect("journal lock");
        let id = match req.patient_id {
            Some(id) if map.contains_key(&id) => return Err(ApiError::Conflict(id)),
            Some(id) => id,
            None => loop {
                journal.patient_seq += 1;
                let id = format!("p{:04}", journal.patient_seq);
                if !map.contains_key(&id) {
                    break id;
                }
            },
        };
        let record = PatientRecord {
            patient_id: id.clone(),
            name: req.name,
            fall_risk: req.fall_risk,
            registered_at: now_ms(),
        };
        journal
            .store
            .append_patient(&record)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        map.insert(
            id,
            Arc::new(tokio::sync::Mutex::new(PatientState {
                record: record.clone(),
                events: Vec::new(),
                history: VecDeque::new(),
                fired: false,
            })),
        );
        Ok(record)
    }

    pub fn validate_packet(&self, id: &str, p: &AccelPacket) -> Result<AccelWindow, ApiError> {
        if let Some(pid) = &p.patient_id {
            if pid != id {
                return Err(ApiError::BadRequest(format!("packet patient_id `{pid}` does not match path `{id}`")));
            }
        }
        if !(MIN_RATE_HZ..=MAX_RATE_HZ).contains(&p.rate_hz) {
            return Err(ApiError::BadRequest(format!(
                "rate_hz {} outside [{MIN_RATE_HZ}, {MAX_RATE_HZ}]",
                p.rate_hz
            )));
        }
        let expected = p.rate_hz * self.window_seconds;
        let n = p.samples.len() as f64;
        if (n - expected).abs() > 0.1 * expected {
            return Err(ApiError::BadRequest(format!(
                "sample count {} outside ±10% of {expected} expected at {} Hz",
                p.samples.len(),
                p.rate_hz
            )));
        }
        AccelWindow::new(p.rate_hz, p.samples.clone(), p.t0).map_err(|e| ApiError::BadRequest(e.to_string()))
    }

    /// Classifies one packet, logs the event and, on the rising edge of the
    /// smoothing rule for an at-risk patient, an alert.
    pub async fn ingest(&self, id: &str, packet: AccelPacket) -> Result<IngestResponse, ApiError> {
        let cell = self.patient(id)?;
        let window = self.validate_packet(id, &packet)?;
        let mut state = cell.lock().await;
        if let Some(last) = state.events.last() {
            if packet.t0 < last.start_ms {
                return Err(ApiError::BadRequest(format!(
                    "t0 {} precedes the previous packet at {}",
                    packet.t0, last.start_ms
                )));
            }
        }
        let c = self
            .classifier
            .classify(&window)
            .map_err(|e| ApiError::BadRequest(e.to_string()))?;
        let event = ActivityEvent {
            patient_id: id.to_string(),
            name: state.record.name.clone(),
            label: c.label.clone(),
            group: c.group,
            posterior_max: c.decision.max_posterior(),
            posterior: c.decision.posterior.clone(),
            start_ms: packet.t0,
            end_ms: window.end_time().max(packet.t0 + 1),
            context: EventContext {
                server_time: now_ms(),
                location: packet.location,
            },
        };
        let mut history = state.history.clone();
        let fired = advance(&mut history, c.decision, &self.rule, &self.trigger);
        let rising = fired && !state.fired;

        let alert = {
            let mut journal = self.journal.lock().expect("journal lock");
            journal
                .store
                .append_event(&event)
                .map_err(|e| ApiError::Internal(e.to_string()))?;
            if rising && state.record.fall_risk {
                let smoothed = temporal_smooth(&history.iter().cloned().collect::<Vec<_>>(), &self.rule, &self.trigger)
                    .map_err(|e| ApiError::Internal(e.to_string()))?;
                let mut window: Vec<ActivityEvent> = state
                    .events
                    .iter()
                    .rev()
                    .take(self.rule.k.saturating_sub(1))
                    .rev()
                    .cloned()
                    .collect();
                window.push(event.clone());
                let alert = Alert {
                    alert_id: journal.last_alert_id + 1,
                    patient_id: id.to_string(),
                    fired_at: now_ms(),
                    label: self.classifier.model().label_names()[smoothed.label].clone(),
                    window,
                };
                journal
                    .store
                    .append_alert(&alert)
                    .map_err(|e| ApiError::Internal(e.to_string()))?;
                journal.last_alert_id = alert.alert_id;
                journal.alerts.push(alert.clone());
                Some(alert)
            } else {
                None
            }
        };
        state.history = history;
        state.fired = fired;
        state.events.push(event.clone());
        drop(state);
        if let Some(a) = &alert {
            self.latest_alert.send_replace(a.alert_id);
        }
        Ok(IngestResponse { event, alert })
    }

    pub async fn get_patient(&self, id: &str) -> Result<PatientRecord, ApiError> {
        let cell = self.patient(id)?;
        let state = cell.lock().await;
        Ok(state.record.clone())
    }

    /// Events with `start_ms ≥ since`, oldest first, at most `limit`.
    pub async fn events(&self, id: &str, since: i64, limit: usize) -> Result<Vec<ActivityEvent>, ApiError> {
        let cell = self.patient(id)?;
        let state = cell.lock().await;
        Ok(state
            .events
            .iter()
            .filter(|e| e.start_ms >= since)
            .take(limit)
            .cloned()
            .collect())
    }

    pub fn alerts_since(&self, since_id: u64) -> Vec<Alert> {
        let journal = self.journal.lock().expect("journal lock");
        let start = journal.alerts.partition_point(|a| a.alert_id <= since_id);
        journal.alerts[start..].to_vec()
    }

    pub fn patient_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.patients.read().expect("patient map lock").keys().cloned().collect();
        ids.sort();
        ids
    }
}
