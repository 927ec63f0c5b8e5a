use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wardsense_core::fusion::SmoothingRule;

use crate::ServiceError;

pub const PORT_ENV: &str = "WARDSENSE_PORT";
pub const DATA_DIR_ENV: &str = "WARDSENSE_DATA_DIR";

/// Server settings, read from TOML:
///
/// ```toml
/// data_dir = "ward-data"
/// port = 8080
/// model = "activity.model"
/// window_seconds = 1.0
///
/// [alert]
/// k = 3
/// threshold = 0.8
/// ```
///
/// Relative paths are taken from the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: String,
    pub port: u16,
    pub model: PathBuf,
    pub window_seconds: f64,
    pub heartbeat_seconds: f64,
    pub alert: SmoothingRule,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("ward-data"),
            bind: "127.0.0.1".into(),
            port: 8080,
            model: PathBuf::from("activity.model"),
            window_seconds: 1.0,
            heartbeat_seconds: 15.0,
            alert: SmoothingRule::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, resolves relative paths against its directory and
    /// applies the environment overrides.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data_dir, &mut cfg.model] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(port) = lookup(PORT_ENV) {
            self.port = port
                .trim()
                .parse()
                .map_err(|_| ServiceError::Config(format!("{PORT_ENV}={port} is not a port number")))?;
        }
        if let Some(dir) = lookup(DATA_DIR_ENV) {
            self.data_dir = PathBuf::from(dir);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        self.alert.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        if !(self.window_seconds > 0.0 && self.window_seconds.is_finite()) {
            return Err(ServiceError::Config(format!(
                "window_seconds must be positive, got {}",
                self.window_seconds
            )));
        }
        if !(self.heartbeat_seconds > 0.0 && self.heartbeat_seconds.is_finite()) {
            return Err(ServiceError::Config(format!(
                "heartbeat_seconds must be positive, got {}",
                self.heartbeat_seconds
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_keys() {
        let cfg = ServiceConfig::from_toml("port = 9000\n[alert]\nk = 5\nthreshold = 0.7\n").unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.alert, SmoothingRule { k: 5, threshold: 0.7 });
        assert_eq!(cfg.window_seconds, 1.0);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ServiceConfig::from_toml("[alert]\nk = 0\nthreshold = 0.8\n").is_err());
        assert!(ServiceConfig::from_toml("window_seconds = -1.0\n").is_err());
        assert!(ServiceConfig::from_toml("colour = \"green\"\n").is_err());
    }

    #[test]
    fn env_overrides_port_and_data_dir() {
        let mut cfg = ServiceConfig::default();
        cfg.apply_env(|k| match k {
            PORT_ENV => Some("1234".into()),
            DATA_DIR_ENV => Some("/tmp/elsewhere".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.port, 1234);
        assert_eq!(cfg.data_dir, PathBuf::from("/tmp/elsewhere"));
        assert!(cfg.apply_env(|_| Some("many".into())).is_err());
    }
}
