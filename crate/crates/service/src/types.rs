use serde::{Deserialize, Serialize};
use wardsense_core::pipelines::Group;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub name: String,
    /// Set for patients wearing the high-risk wrist tag; only they raise alerts.
    pub fall_risk: bool,
    pub registered_at: i64,
}

/// Registration body. An explicit id is optional and must be unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewPatient {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
    pub name: String,
    #[serde(default)]
    pub fall_risk: bool,
}

/// One second (by default) of tri-axial samples in g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelPacket {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
    pub t0: i64,
    pub rate_hz: f64,
    pub samples: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventContext {
    pub server_time: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

/// The classification of one packet. The full posterior is kept so the
/// alert history can be rebuilt from the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityEvent {
    pub patient_id: String,
    pub name: String,
    pub label: String,
    pub group: Group,
    pub posterior_max: f64,
    pub posterior: Vec<f64>,
    pub start_ms: i64,
    pub end_ms: i64,
    pub context: EventContext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: u64,
    pub patient_id: String,
    pub fired_at: i64,
    pub label: String,
    /// The events the smoothing rule looked at, oldest first.
    pub window: Vec<ActivityEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub event: ActivityEvent,
    pub alert: Option<Alert>,
}
