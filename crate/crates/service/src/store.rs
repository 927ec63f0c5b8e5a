//! Append-only JSON-lines logs, one file per record kind.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::types::{ActivityEvent, Alert, PatientRecord};

pub const PATIENTS_LOG: &str = "patients.jsonl";
pub const EVENTS_LOG: &str = "events.jsonl";
pub const ALERTS_LOG: &str = "alerts.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: line {line}: {reason}", path.display())]
    Corrupt { path: PathBuf, line: usize, reason: String },
}

/// What was read back from disk at startup.
#[derive(Debug, Default)]
pub struct Recovered {
    pub patients: Vec<PatientRecord>,
    pub events: Vec<ActivityEvent>,
    pub alerts: Vec<Alert>,
    /// One entry per discarded torn line.
    pub warnings: Vec<String>,
}

#[derive(Debug)]
struct Log {
    path: PathBuf,
    file: File,
}

impl Log {
    fn append<T: Serialize>(&mut self, record: &T) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(record).expect("records serialize");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.flush())
            .map_err(|source| StoreError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    patients: Log,
    events: Log,
    alerts: Log,
}

impl Store {
    /// Opens (creating if needed) the logs under `dir` and replays them.
    pub fn open(dir: &Path) -> Result<(Self, Recovered), StoreError> {
        std::fs::create_dir_all(dir).map_err(|source| StoreError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut rec = Recovered::default();
        let (patients, p) = open_log(&dir.join(PATIENTS_LOG), &mut rec.warnings)?;
        let (events, e) = open_log(&dir.join(EVENTS_LOG), &mut rec.warnings)?;
        let (alerts, a) = open_log(&dir.join(ALERTS_LOG), &mut rec.warnings)?;
        rec.patients = p;
        rec.events = e;
        rec.alerts = a;
        Ok((
            Self {
                dir: dir.to_path_buf(),
                patients,
                events,
                alerts,
            },
            rec,
        ))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append_patient(&mut self, p: &PatientRecord) -> Result<(), StoreError> {
        self.patients.append(p)
    }

    pub fn append_event(&mut self, e: &ActivityEvent) -> Result<(), StoreError> {
        self.events.append(e)
    }

    pub fn append_alert(&mut self, a: &Alert) -> Result<(), StoreError> {
        self.alerts.append(a)
    }
}

/// Parses every line of `path`. An unparseable final line is taken to be a
/// torn write: it is cut off the file and reported in `warnings`. Damage
/// anywhere else is an error.
fn open_log<T: DeserializeOwned>(path: &Path, warnings: &mut Vec<String>) -> Result<(Log, Vec<T>), StoreError> {
    let io = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = OpenOptions::new()
        .read(true)
        .append(true)
        .create(true)
        .open(path)
        .map_err(io)?;
    let mut text = String::new();
    file.read_to_string(&mut text).map_err(io)?;

    let mut records = Vec::new();
    let mut offset = 0usize;
    let mut keep = 0usize;
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, raw) in lines.iter().enumerate() {
        let line = raw.trim_end_matches(['\n', '\r']);
        let start = offset;
        offset += raw.len();
        if line.trim().is_empty() {
            keep = offset;
            continue;
        }
        match serde_json::from_str::<T>(line) {
            Ok(r) => {
                records.push(r);
                keep = offset;
            }
            Err(e) if i + 1 == lines.len() => {
                let msg = format!("{}: discarded torn final line {}: {e}", path.display(), i + 1);
                log::warn!("{msg}");
                warnings.push(msg);
                keep = start;
            }
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    if keep < text.len() {
        file.set_len(keep as u64).map_err(io)?;
    }
    file.seek(SeekFrom::End(0)).map_err(io)?;
    if keep > 0 && !text[..keep].ends_with('\n') {
        file.write_all(b"\n").map_err(io)?;
    }
    Ok((
        Log {
            path: path.to_path_buf(),
            file,
        },
        records,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patient(id: &str) -> PatientRecord {
        PatientRecord {
            patient_id: id.into(),
            name: "N".into(),
            fall_risk: false,
            registered_at: 1,
        }
    }

    #[test]
    fn fresh_directory_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let (_, rec) = Store::open(&dir.path().join("new")).unwrap();
        assert!(rec.patients.is_empty() && rec.events.is_empty() && rec.alerts.is_empty());
        assert!(rec.warnings.is_empty());
    }

    #[test]
    fn torn_tail_is_cut_and_appends_continue() {
        let dir = tempfile::tempdir().unwrap();
        {
            let (mut s, _) = Store::open(dir.path()).unwrap();
            s.append_patient(&patient("a")).unwrap();
            s.append_patient(&patient("b")).unwrap();
        }
        let path = dir.path().join(PATIENTS_LOG);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"patient_id\":\"c\",\"na").unwrap();
        drop(f);
        {
            let (mut s, rec) = Store::open(dir.path()).unwrap();
            assert_eq!(rec.patients.len(), 2);
            assert_eq!(rec.warnings.len(), 1);
            s.append_patient(&patient("d")).unwrap();
        }
        let (_, rec) = Store::open(dir.path()).unwrap();
        let ids: Vec<_> = rec.patients.iter().map(|p| p.patient_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "d"]);
        assert!(rec.warnings.is_empty());
    }

    #[test]
    fn valid_tail_without_newline_is_kept() {
        let dir = tempfile::tempdir().unwrap();
        let line = serde_json::to_string(&patient("a")).unwrap();
        std::fs::write(dir.path().join(PATIENTS_LOG), line).unwrap();
        {
            let (mut s, rec) = Store::open(dir.path()).unwrap();
            assert_eq!(rec.patients.len(), 1);
            s.append_patient(&patient("b")).unwrap();
        }
        assert_eq!(Store::open(dir.path()).unwrap().1.patients.len(), 2);
    }

    #[test]
    fn damage_before_the_tail_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let good = serde_json::to_string(&patient("a")).unwrap();
        std::fs::write(dir.path().join(PATIENTS_LOG), format!("garbage\n{good}\n")).unwrap();
        match Store::open(dir.path()) {
            Err(StoreError::Corrupt { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
