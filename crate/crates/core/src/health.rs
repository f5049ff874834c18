//! Descriptive and diagnostic analytics: classify values into health levels, build per-area
//! snapshots, raise alarms, and explain where and why an alarm occurs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{AssetError, AssetNode, AssetPath, AssetTree, NodeKind};
use crate::level::HealthLevel;
use crate::rollup::{self, PolicySpec, RollupError};
use crate::telemetry::{TelemetryError, TelemetryStore};
use crate::timefmt::{self, Timestamp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HealthError {
    #[error("value {value} outside the domain of {node}")]
    OutOfDomainValue { node: String, value: f64 },
    #[error("{0} is not a classifiable parameter")]
    NotAParameter(String),
    #[error("unknown path {0}")]
    UnknownPath(String),
    #[error("alarm {0} does not reference a parameter in the tree")]
    UnknownAlarm(String),
    #[error(transparent)]
    Rollup(#[from] RollupError),
}

impl From<TelemetryError> for HealthError {
    fn from(e: TelemetryError) -> Self {
        match e {
            TelemetryError::UnknownPath(p) => HealthError::UnknownPath(p),
            other => HealthError::UnknownPath(other.to_string()),
        }
    }
}

impl From<AssetError> for HealthError {
    fn from(e: AssetError) -> Self {
        HealthError::UnknownPath(e.to_string())
    }
}

/// Maps a parameter value to its health level using the node's bands and direction.
pub fn classify_level(node: &AssetNode, value: f64) -> Result<HealthLevel, HealthError> {
    let (Some(direction), Some(bands)) = (node.direction, node.bands.as_ref()) else {
        return Err(HealthError::NotAParameter(node.id.clone()));
    };
    if !value.is_finite() || !node.value_domain().contains(value) {
        return Err(HealthError::OutOfDomainValue { node: node.id.clone(), value });
    }
    Ok(bands.level_for(direction, value))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub parameter: String,
    pub display_name: String,
    pub unit: String,
    pub value: Option<f64>,
    #[serde(with = "timefmt::option")]
    pub ts: Option<Timestamp>,
    /// Absent when the parameter has no data.
    pub level: Option<HealthLevel>,
}

impl SnapshotEntry {
    pub fn is_no_data(&self) -> bool {
        self.level.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaHealthSnapshot {
    pub path: AssetPath,
    #[serde(with = "timefmt")]
    pub ts: Timestamp,
    pub entries: Vec<SnapshotEntry>,
    pub area_level: Option<HealthLevel>,
}

/// Latest-value health snapshot of one user area (or any node with parameter children).
pub fn snapshot_area(
    tree: &AssetTree,
    store: &TelemetryStore,
    path: &AssetPath,
    at: Timestamp,
    policy: &PolicySpec,
) -> Result<AreaHealthSnapshot, HealthError> {
    let node = tree.resolve(path)?;
    let params: Vec<&AssetNode> =
        node.children.iter().filter(|c| c.kind == NodeKind::Parameter).collect();
    if params.is_empty() {
        return Err(HealthError::UnknownPath(path.to_string()));
    }
    let mut entries = Vec::with_capacity(params.len());
    for param in params {
        let reading = store.latest_at(&path.join(&param.id), at)?;
        let level = match &reading {
            Some(r) => Some(classify_level(param, r.value)?),
            None => None,
        };
        entries.push(SnapshotEntry {
            parameter: param.id.clone(),
            display_name: param.display_name.clone(),
            unit: param.unit.clone().unwrap_or_default(),
            value: reading.as_ref().map(|r| r.value),
            ts: reading.as_ref().map(|r| r.ts),
            level,
        });
    }
    let policy = rollup::resolve_policy(policy, node)?;
    let levels: Vec<_> = entries.iter().map(|e| (e.parameter.clone(), e.level)).collect();
    let area_level = rollup::aggregate(&levels, &policy)?;
    Ok(AreaHealthSnapshot { path: path.clone(), ts: at, entries, area_level })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    pub id: String,
    pub path: AssetPath,
    /// Timestamp of the reading that triggered the alarm.
    #[serde(with = "timefmt")]
    pub ts: Timestamp,
    pub level: HealthLevel,
    pub observed_value: f64,
}

pub fn alarm_id(path: &AssetPath, ts: &Timestamp) -> String {
    format!("ALM-{}", crate::short_hash(&format!("{path}@{}", timefmt::format(ts))))
}

/// One alarm per entry at or below `alarm_level`, ordered by parameter id. NoData entries never
/// alarm.
pub fn detect_alarms(snapshot: &AreaHealthSnapshot, alarm_level: u8) -> Vec<Alarm> {
    let mut entries: Vec<&SnapshotEntry> = snapshot
        .entries
        .iter()
        .filter(|e| e.level.is_some_and(|l| l.value() <= alarm_level))
        .collect();
    entries.sort_by(|a, b| a.parameter.cmp(&b.parameter));
    entries
        .into_iter()
        .map(|e| {
            let path = snapshot.path.join(&e.parameter);
            let ts = e.ts.expect("classified entries carry a timestamp");
            Alarm {
                id: alarm_id(&path, &ts),
                path,
                ts,
                level: e.level.expect("filtered"),
                observed_value: e.value.expect("classified entries carry a value"),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CauseCode {
    LampFailure,
    LumenDepreciation,
    LowDaylightContribution,
    DriverOvertemp,
    UnknownCause,
}

impl CauseCode {
    pub fn confidence(self) -> f64 {
        match self {
            CauseCode::LampFailure => 0.9,
            CauseCode::LumenDepreciation => 0.7,
            CauseCode::LowDaylightContribution => 0.6,
            CauseCode::DriverOvertemp => 0.6,
            CauseCode::UnknownCause => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cause {
    pub code: CauseCode,
    pub confidence: f64,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisResult {
    pub alarm_id: String,
    /// Localization chain from the floor (or subsystem) down to the alarming parameter.
    #[serde(rename = "where")]
    pub location: Vec<AssetPath>,
    pub causes: Vec<Cause>,
}

impl DiagnosisResult {
    pub fn top_cause(&self) -> CauseCode {
        self.causes[0].code
    }
}

/// Inputs of the diagnosis rule table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosisConfig {
    /// Parameters that measure light output.
    pub light_output_params: Vec<String>,
    pub burning_hours_param: String,
    pub driver_temp_param: String,
    pub rated_life_hours: f64,
    /// Fraction of rated life past which lumen depreciation is suspected.
    pub depreciation_life_fraction: f64,
    /// Relative drop between consecutive readings that indicates a failed lamp.
    pub failure_drop_fraction: f64,
    pub low_daylight_lux: f64,
    pub overtemp_celsius: f64,
}

impl Default for DiagnosisConfig {
    fn default() -> Self {
        Self {
            light_output_params: vec!["illuminance".into(), "melanopic-edi".into()],
            burning_hours_param: "burning-hours".into(),
            driver_temp_param: "driver-temp".into(),
            rated_life_hours: 50_000.0,
            depreciation_life_fraction: 0.8,
            failure_drop_fraction: 0.9,
            low_daylight_lux: 1000.0,
            overtemp_celsius: 75.0,
        }
    }
}

/// Explains an alarm with the deterministic rule table, strongest cause first.
pub fn diagnose(
    alarm: &Alarm,
    tree: &AssetTree,
    store: &TelemetryStore,
    config: &DiagnosisConfig,
) -> Result<DiagnosisResult, HealthError> {
    tree.resolve_kind(&alarm.path, NodeKind::Parameter)
        .map_err(|_| HealthError::UnknownAlarm(alarm.id.clone()))?;
    let parent = alarm.path.parent().ok_or_else(|| HealthError::UnknownAlarm(alarm.id.clone()))?;
    let param = alarm.path.leaf();
    let light = config.light_output_params.iter().any(|p| p == param);

    let sibling_latest = |id: &str| -> Option<f64> {
        let path = parent.join(id);
        tree.resolve(&path).ok()?;
        store.latest_at(&path, alarm.ts).ok().flatten().map(|r| r.value)
    };

    let mut causes = Vec::new();
    if light {
        let recent = store.recent(&alarm.path, alarm.ts, 2)?;
        if let [prev, cur] = recent.as_slice() {
            if prev.value > 0.0 {
                let drop = (prev.value - cur.value) / prev.value;
                if drop > config.failure_drop_fraction {
                    causes.push(cause(
                        CauseCode::LampFailure,
                        format!("{param} fell {:.0}% from {} to {} between consecutive readings", drop * 100.0, prev.value, cur.value),
                    ));
                }
            }
        }
        if let Some(hours) = sibling_latest(&config.burning_hours_param) {
            let limit = config.depreciation_life_fraction * config.rated_life_hours;
            if hours > limit {
                causes.push(cause(
                    CauseCode::LumenDepreciation,
                    format!("burning hours {hours} exceed {limit} ({:.0}% of rated life)", config.depreciation_life_fraction * 100.0),
                ));
            }
        }
        if let Some(ctx) = store.latest_context(Some(alarm.ts)) {
            if ctx.outdoor_illuminance < config.low_daylight_lux {
                causes.push(cause(
                    CauseCode::LowDaylightContribution,
                    format!("outdoor illuminance {} lux below {} lux", ctx.outdoor_illuminance, config.low_daylight_lux),
                ));
            }
        }
    }
    let temp = if param == config.driver_temp_param {
        Some(alarm.observed_value)
    } else {
        sibling_latest(&config.driver_temp_param)
    };
    if let Some(t) = temp.filter(|&t| t >= config.overtemp_celsius) {
        causes.push(cause(
            CauseCode::DriverOvertemp,
            format!("driver temperature {t} at or above {}", config.overtemp_celsius),
        ));
    }
    if causes.is_empty() {
        causes.push(cause(CauseCode::UnknownCause, "no rule matched".into()));
    }
    // stable: ties keep rule-table order
    causes.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

    let location = alarm.path.prefixes().filter(|p| p.len() >= 3).collect();
    Ok(DiagnosisResult { alarm_id: alarm.id.clone(), location, causes })
}

fn cause(code: CauseCode, evidence: String) -> Cause {
    Cause { code, confidence: code.confidence(), evidence }
}
