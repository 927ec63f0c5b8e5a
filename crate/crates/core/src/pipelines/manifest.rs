use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_error, PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Group {
    Adl,
    Fall,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Adl => "ADL",
            Group::Fall => "FALL",
        })
    }
}

impl std::str::FromStr for Group {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ADL" => Ok(Group::Adl),
            "FALL" => Ok(Group::Fall),
            other => Err(PipelineError::Manifest(format!("unknown group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityLabel {
    pub name: String,
    pub group: Group,
}

/// Ordered class list with the ADL / FALL grouping. The order fixes the
/// class indices of any model trained against it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub source: String,
    pub labels: Vec<ActivityLabel>,
}

const UNIMIB_ADL: [&str; 9] = [
    "StandingUpFromSitting",
    "StandingUpFromLaying",
    "Walking",
    "Running",
    "GoingUpstairs",
    "Jumping",
    "GoingDownstairs",
    "LyingDownFromStanding",
    "SittingDown",
];

const UNIMIB_FALL: [&str; 8] = [
    "FallForward",
    "FallRight",
    "FallBackward",
    "HittingObstacle",
    "FallWithProtectionStrategies",
    "FallBackwardSittingChair",
    "Syncope",
    "FallLeft",
];

impl Manifest {
    pub fn new(source: impl Into<String>, labels: Vec<ActivityLabel>) -> Result<Self> {
        let m = Self {
            source: source.into(),
            labels,
        };
        m.validate()?;
        Ok(m)
    }

    /// The 17 UniMiB-SHAR classes: 9 daily activities and 8 fall types.
    pub fn unimib_shar() -> Self {
        let labels = UNIMIB_ADL
            .iter()
            .map(|n| (n, Group::Adl))
            .chain(UNIMIB_FALL.iter().map(|n| (n, Group::Fall)))
            .map(|(name, group)| ActivityLabel {
                name: name.to_string(),
                group,
            })
            .collect();
        Self {
            source: "UniMiB-SHAR".into(),
            labels,
        }
    }

    /// The simulator's walking / idle / fall task.
    pub fn synthetic_three_class() -> Self {
        let labels = [("walking", Group::Adl), ("idle", Group::Adl), ("fall", Group::Fall)]
            .into_iter()
            .map(|(name, group)| ActivityLabel {
                name: name.into(),
                group,
            })
            .collect();
        Self {
            source: "simulator".into(),
            labels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(PipelineError::Manifest("no labels".into()));
        }
        let mut seen = HashSet::new();
        for l in &self.labels {
            if l.name.is_empty() || l.name.contains(',') {
                return Err(PipelineError::Manifest(format!("bad label name `{}`", l.name)));
            }
            if !seen.insert(&l.name) {
                return Err(PipelineError::Manifest(format!("duplicate label `{}`", l.name)));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| PipelineError::Format {
            path: path.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(io_error(path))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.name.clone()).collect()
    }

    pub fn groups(&self) -> Vec<Group> {
        self.labels.iter().map(|l| l.group).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| PipelineError::UnknownLabel(name.to_string()))
    }

    pub fn group_of(&self, name: &str) -> Result<Group> {
        Ok(self.labels[self.index_of(name)?].group)
    }

    /// Whether `name` belongs to the FALL group.
    pub fn is_fall(&self, name: &str) -> Result<bool> {
        Ok(self.group_of(name)? == Group::Fall)
    }

    /// Class indices of the FALL group.
    pub fn fall_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.group == Group::Fall)
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unimib_partition() {
        let m = Manifest::unimib_shar();
        assert_eq!(m.len(), 17);
        assert_eq!(m.fall_indices().len(), 8);
        assert!(m.is_fall("FallForward").unwrap());
        assert!(m.is_fall("FallLeft").unwrap());
        assert!(!m.is_fall("Walking").unwrap());
        assert!(!m.is_fall("Running").unwrap());
        assert!(matches!(m.is_fall("Swimming"), Err(PipelineError::UnknownLabel(_))));
    }

    #[test]
    fn json_round_trip() {
        let m = Manifest::synthetic_three_class();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"FALL\""));
        assert_eq!(serde_json::from_str::<Manifest>(&text).unwrap(), m);
    }

    #[test]
    fn duplicates_rejected() {
        let l = ActivityLabel {
            name: "a".into(),
            group: Group::Adl,
        };
        assert!(Manifest::new("x", vec![l.clone(), l]).is_err());
    }
}
