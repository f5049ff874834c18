//! Service configuration file.
//!
//! ```json
//! {
//!   "assets": "demo-assets.json",
//!   "data_log": "../data/twin-log.jsonl",
//!   "feed": "../data/demo-feed.jsonl",
//!   "listen": "127.0.0.1:8080",
//!   "evaluation_interval_minutes": 15,
//!   "clock": { "mode": "simulated", "start": "2025-01-01T00:00:00Z", "speedup": 3600 }
//! }
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use twin_core::asset::{build_tree, AssetConfigDocument, AssetError, AssetTree};
use twin_core::health::DiagnosisConfig;
use twin_core::rollup::PolicyStack;
use twin_core::timefmt::{self, Timestamp};
use twin_core::workorder::{CalendarDue, ResourceCalendar, WorkOrderPolicy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Asset(#[from] AssetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ClockMode {
    /// Ticks follow the wall clock.
    Realtime,
    /// Simulated time starting at `start`. `speedup` simulated seconds pass per wall second;
    /// without it, ticks run back to back while feed data remains.
    Simulated {
        #[serde(with = "timefmt")]
        start: Timestamp,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        speedup: Option<f64>,
    },
}

impl Default for ClockMode {
    fn default() -> Self {
        ClockMode::Realtime
    }
}

/// Parameters of the evaluation loop, independent of I/O.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub evaluation_interval_minutes: u32,
    /// Parameters at or below this level raise an alarm.
    pub alarm_level: u8,
    /// Forecasts at or below this level raise a predictive order.
    pub pdm_level: u8,
    pub policies: PolicyStack,
    pub calendar: ResourceCalendar,
    pub workorders: WorkOrderPolicy,
    pub diagnosis: DiagnosisConfig,
    pub pm_schedule: Vec<CalendarDue>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            evaluation_interval_minutes: 15,
            alarm_level: 2,
            pdm_level: 2,
            policies: PolicyStack::default(),
            calendar: ResourceCalendar::default(),
            workorders: WorkOrderPolicy::default(),
            diagnosis: DiagnosisConfig::default(),
            pm_schedule: Vec::new(),
        }
    }
}

impl EngineConfig {
    pub fn check(&self, tree: &AssetTree) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.evaluation_interval_minutes == 0 {
            return bad("evaluation_interval_minutes must be positive".into());
        }
        if !(1..=4).contains(&self.alarm_level) {
            return bad(format!("alarm_level {} outside 1..=4", self.alarm_level));
        }
        if !(1..=4).contains(&self.pdm_level) {
            return bad(format!("pdm_level {} outside 1..=4", self.pdm_level));
        }
        if self.calendar.check().is_err() {
            return bad("calendar needs at least one technician with positive capacity".into());
        }
        for entry in &self.pm_schedule {
            tree.resolve(&entry.path)?;
            if entry.interval_days == 0 {
                return bad(format!("pm interval for {} must be positive", entry.path));
            }
        }
        for (path, node) in tree.walk() {
            if !node.children.is_empty() {
                self.policies
                    .policy_for(node)
                    .map_err(|e| ConfigError::Invalid(format!("policy at {path}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn interval(&self) -> chrono::Duration {
        chrono::Duration::minutes(i64::from(self.evaluation_interval_minutes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    /// Asset configuration file. The built-in demo library when absent.
    #[serde(default)]
    pub assets: Option<PathBuf>,
    pub data_log: PathBuf,
    /// Telemetry file (JSON Lines) released into the twin as the clock passes each event.
    #[serde(default)]
    pub feed: Option<PathBuf>,
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default)]
    pub clock: ClockMode,
    #[serde(flatten)]
    pub engine: EngineConfig,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

impl ServiceConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut config: ServiceConfig = serde_json::from_str(&text)
            .map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.assets = config.assets.map(|p| base.join(p));
        config.data_log = base.join(&config.data_log);
        config.feed = config.feed.map(|p| base.join(p));
        if let ClockMode::Simulated { speedup: Some(s), .. } = config.clock {
            if !(s.is_finite() && s > 0.0) {
                return Err(ConfigError::Invalid("clock speedup must be positive".into()));
            }
        }
        Ok(config)
    }

    pub fn load_tree(&self) -> Result<AssetTree, ConfigError> {
        load_assets(self.assets.as_deref())
    }
}

/// Loads an asset file, or the built-in demo library for `None`.
pub fn load_assets(path: Option<&Path>) -> Result<AssetTree, ConfigError> {
    let doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?;
            AssetConfigDocument::from_json(&text)?
        }
        None => twin_core::asset::demo_config(),
    };
    Ok(build_tree(doc)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults_and_resolved_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("svc.json");
        std::fs::write(&path, r#"{"data_log": "out/log.jsonl"}"#).unwrap();
        let cfg = ServiceConfig::load(&path).unwrap();
        assert_eq!(cfg.data_log, dir.path().join("out/log.jsonl"));
        assert_eq!(cfg.engine, EngineConfig::default());
        assert_eq!(cfg.clock, ClockMode::Realtime);
        let tree = cfg.load_tree().unwrap();
        cfg.engine.check(&tree).unwrap();
    }

    #[test]
    fn simulated_clock_parses() {
        let clock: ClockMode =
            serde_json::from_str(r#"{"mode":"simulated","start":"2025-01-01T00:00:00Z","speedup":60}"#).unwrap();
        assert!(matches!(clock, ClockMode::Simulated { speedup: Some(s), .. } if s == 60.0));
    }

    #[test]
    fn rejects_bad_levels() {
        let tree = load_assets(None).unwrap();
        let cfg = EngineConfig { alarm_level: 5, ..EngineConfig::default() };
        assert!(cfg.check(&tree).is_err());
        let cfg = EngineConfig { evaluation_interval_minutes: 0, ..EngineConfig::default() };
        assert!(cfg.check(&tree).is_err());
    }
}
