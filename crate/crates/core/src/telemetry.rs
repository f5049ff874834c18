//! Time-stamped parameter readings, environmental context, and windowed history queries.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use chrono::{DateTime, Duration};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{AssetPath, AssetTree, NodeKind};
use crate::timefmt::{self, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterReading {
    #[serde(with = "timefmt")]
    pub ts: Timestamp,
    pub path: AssetPath,
    pub value: f64,
    pub unit: String,
}

/// Site location, weather and local time at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    #[serde(with = "timefmt")]
    pub ts: Timestamp,
    #[serde(rename = "lat")]
    pub latitude: f64,
    #[serde(rename = "lon")]
    pub longitude: f64,
    /// Outdoor illuminance in lux.
    #[serde(rename = "oi")]
    pub outdoor_illuminance: f64,
    /// Cloud cover fraction in `[0, 1]`.
    #[serde(rename = "cc")]
    pub cloud_cover: f64,
    /// ISO-8601 local time with offset.
    #[serde(rename = "local")]
    pub local_time: String,
}

impl ContextRecord {
    pub fn check(&self) -> Result<(), TelemetryError> {
        let fail = |field: &str| Err(TelemetryError::FieldOutOfRange(field.to_string()));
        if !(-90.0..=90.0).contains(&self.latitude) {
            return fail("lat");
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return fail("lon");
        }
        if !(self.outdoor_illuminance.is_finite() && self.outdoor_illuminance >= 0.0) {
            return fail("oi");
        }
        if !(0.0..=1.0).contains(&self.cloud_cover) {
            return fail("cc");
        }
        if DateTime::parse_from_rfc3339(&self.local_time).is_err() {
            return fail("local");
        }
        Ok(())
    }
}

/// Named history spans offered for charting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistoryWindow {
    H12,
    H48,
    Week,
    Month,
    Year,
}

impl HistoryWindow {
    pub const ALL: [HistoryWindow; 5] = [
        HistoryWindow::H12,
        HistoryWindow::H48,
        HistoryWindow::Week,
        HistoryWindow::Month,
        HistoryWindow::Year,
    ];

    pub fn bucket_width(self) -> Duration {
        match self {
            HistoryWindow::H12 | HistoryWindow::H48 => Duration::hours(1),
            HistoryWindow::Week | HistoryWindow::Month => Duration::days(1),
            HistoryWindow::Year => Duration::weeks(1),
        }
    }

    pub fn bucket_count(self) -> usize {
        match self {
            HistoryWindow::H12 => 12,
            HistoryWindow::H48 => 48,
            HistoryWindow::Week => 7,
            // months are 30 days, years 52 weeks
            HistoryWindow::Month => 30,
            HistoryWindow::Year => 52,
        }
    }

    pub fn span(self) -> Duration {
        self.bucket_width() * self.bucket_count() as i32
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "h12" => Some(HistoryWindow::H12),
            "h48" => Some(HistoryWindow::H48),
            "week" => Some(HistoryWindow::Week),
            "month" => Some(HistoryWindow::Month),
            "year" => Some(HistoryWindow::Year),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBucket {
    #[serde(with = "timefmt")]
    pub start: Timestamp,
    /// Arithmetic mean of readings in the bucket, absent when the bucket is empty.
    pub mean: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TelemetryError {
    #[error("unknown parameter path {0}")]
    UnknownPath(String),
    #[error("value {value} outside the domain of {path}")]
    OutOfDomainValue { path: String, value: f64 },
    #[error("non-finite value for {0}")]
    NonFiniteValue(String),
    #[error("unit {got:?} does not match {expected:?} for {path}")]
    UnitMismatch { path: String, expected: String, got: String },
    #[error("context field {0} out of range")]
    FieldOutOfRange(String),
}

/// Acknowledgement of an accepted write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ack {
    Appended,
    /// The `(ts, path)` key already existed; the prior value was replaced.
    Replaced,
}

/// In-memory index of readings and context, keyed for range queries.
///
/// Readings are keyed by `(path, ts)` with last-write-wins semantics. Persistence is layered on
/// top by the event log; this type only holds the index.
#[derive(Debug, Clone)]
pub struct TelemetryStore {
    tree: Arc<AssetTree>,
    readings: HashMap<AssetPath, BTreeMap<i64, f64>>,
    contexts: BTreeMap<i64, ContextRecord>,
}

impl TelemetryStore {
    pub fn new(tree: Arc<AssetTree>) -> Self {
        Self { tree, readings: HashMap::new(), contexts: BTreeMap::new() }
    }

    pub fn tree(&self) -> &Arc<AssetTree> {
        &self.tree
    }

    /// Validates a reading against the asset tree without storing it.
    pub fn check(&self, reading: &ParameterReading) -> Result<(), TelemetryError> {
        let path = reading.path.to_string();
        let node = self
            .tree
            .resolve_kind(&reading.path, NodeKind::Parameter)
            .map_err(|_| TelemetryError::UnknownPath(path.clone()))?;
        if !reading.value.is_finite() {
            return Err(TelemetryError::NonFiniteValue(path));
        }
        if !node.value_domain().contains(reading.value) {
            return Err(TelemetryError::OutOfDomainValue { path, value: reading.value });
        }
        let expected = node.unit.clone().unwrap_or_default();
        if reading.unit != expected {
            return Err(TelemetryError::UnitMismatch { path, expected, got: reading.unit.clone() });
        }
        Ok(())
    }

    pub fn ingest(&mut self, reading: &ParameterReading) -> Result<Ack, TelemetryError> {
        self.check(reading)?;
        let series = self.readings.entry(reading.path.clone()).or_default();
        Ok(match series.insert(reading.ts.timestamp(), reading.value) {
            Some(_) => Ack::Replaced,
            None => Ack::Appended,
        })
    }

    pub fn ingest_context(&mut self, record: &ContextRecord) -> Result<Ack, TelemetryError> {
        record.check()?;
        Ok(match self.contexts.insert(record.ts.timestamp(), record.clone()) {
            Some(_) => Ack::Replaced,
            None => Ack::Appended,
        })
    }

    fn series(&self, path: &AssetPath) -> Result<Option<&BTreeMap<i64, f64>>, TelemetryError> {
        self.tree
            .resolve_kind(path, NodeKind::Parameter)
            .map_err(|_| TelemetryError::UnknownPath(path.to_string()))?;
        Ok(self.readings.get(path))
    }

    fn reading_at(&self, path: &AssetPath, ts: i64, value: f64) -> ParameterReading {
        let unit = self
            .tree
            .resolve(path)
            .ok()
            .and_then(|n| n.unit.clone())
            .unwrap_or_default();
        ParameterReading {
            ts: DateTime::from_timestamp(ts, 0).expect("stored timestamps are valid"),
            path: path.clone(),
            value,
            unit,
        }
    }

    pub fn latest(&self, path: &AssetPath) -> Result<Option<ParameterReading>, TelemetryError> {
        Ok(self
            .series(path)?
            .and_then(|s| s.last_key_value())
            .map(|(&ts, &v)| self.reading_at(path, ts, v)))
    }

    /// Latest reading with `ts <= at`.
    pub fn latest_at(
        &self,
        path: &AssetPath,
        at: Timestamp,
    ) -> Result<Option<ParameterReading>, TelemetryError> {
        Ok(self.recent(path, at, 1)?.pop())
    }

    /// Up to `n` most recent readings with `ts <= at`, oldest first.
    pub fn recent(
        &self,
        path: &AssetPath,
        at: Timestamp,
        n: usize,
    ) -> Result<Vec<ParameterReading>, TelemetryError> {
        let Some(series) = self.series(path)? else {
            return Ok(Vec::new());
        };
        let mut out: Vec<_> = series
            .range(..=at.timestamp())
            .rev()
            .take(n)
            .map(|(&ts, &v)| self.reading_at(path, ts, v))
            .collect();
        out.reverse();
        Ok(out)
    }

    /// Readings with `from <= ts < to`, ascending.
    pub fn range(
        &self,
        path: &AssetPath,
        from: Timestamp,
        to: Timestamp,
    ) -> Result<Vec<(Timestamp, f64)>, TelemetryError> {
        let Some(series) = self.series(path)? else {
            return Ok(Vec::new());
        };
        if from >= to {
            return Ok(Vec::new());
        }
        Ok(series
            .range(from.timestamp()..to.timestamp())
            .map(|(&ts, &v)| (DateTime::from_timestamp(ts, 0).expect("valid"), v))
            .collect())
    }

    /// `count` consecutive buckets of `width` starting at `start`.
    pub fn bucket_series(
        &self,
        path: &AssetPath,
        start: Timestamp,
        width: Duration,
        count: usize,
    ) -> Result<Vec<WindowBucket>, TelemetryError> {
        let series = self.series(path)?;
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let lo = start + width * i as i32;
            let hi = lo + width;
            let (mut sum, mut n) = (0.0, 0usize);
            if let Some(series) = series {
                for (_, &v) in series.range(lo.timestamp()..hi.timestamp()) {
                    sum += v;
                    n += 1;
                }
            }
            out.push(WindowBucket { start: lo, mean: (n > 0).then(|| sum / n as f64), count: n });
        }
        Ok(out)
    }

    /// Buckets tiling `[end - span, end)` for one of the history windows.
    pub fn window_series(
        &self,
        path: &AssetPath,
        window: HistoryWindow,
        end: Timestamp,
    ) -> Result<Vec<WindowBucket>, TelemetryError> {
        self.bucket_series(path, end - window.span(), window.bucket_width(), window.bucket_count())
    }

    pub fn latest_context(&self, at: Option<Timestamp>) -> Option<&ContextRecord> {
        match at {
            Some(at) => self.contexts.range(..=at.timestamp()).next_back().map(|(_, c)| c),
            None => self.contexts.last_key_value().map(|(_, c)| c),
        }
    }

    pub fn contexts_between(&self, from: Timestamp, to: Timestamp) -> Vec<&ContextRecord> {
        if from >= to {
            return Vec::new();
        }
        self.contexts.range(from.timestamp()..to.timestamp()).map(|(_, c)| c).collect()
    }

    /// Whether a reading with exactly this key and value is stored.
    pub fn contains(&self, reading: &ParameterReading) -> bool {
        self.readings
            .get(&reading.path)
            .and_then(|s| s.get(&reading.ts.timestamp()))
            .is_some_and(|v| v.to_bits() == reading.value.to_bits())
    }

    pub fn contains_context(&self, record: &ContextRecord) -> bool {
        self.contexts.get(&record.ts.timestamp()) == Some(record)
    }

    pub fn reading_count(&self) -> usize {
        self.readings.values().map(BTreeMap::len).sum()
    }

    /// Timestamp of the newest reading or context record.
    pub fn newest_ts(&self) -> Option<Timestamp> {
        let r = self.readings.values().filter_map(|s| s.keys().next_back()).max().copied();
        let c = self.contexts.keys().next_back().copied();
        r.max(c).and_then(|t| DateTime::from_timestamp(t, 0))
    }
}
