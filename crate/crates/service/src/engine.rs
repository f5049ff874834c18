//! The evaluation loop: descriptive snapshot, alarm detection and diagnosis, daily forecast
//! refresh, work-order generation and scheduling, all driven by one tick function.
//!
//! State is rebuilt from the event log on start. Every mutation is written to the log before it
//! is applied in memory, so a replayed log reproduces the state it was written from.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use chrono::{DateTime, Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use twin_core::asset::{AssetNode, AssetPath, AssetTree, NodeKind};
use twin_core::eventlog::{AlarmRecord, EventLog, LogError, LogEvent};
use twin_core::forecast::{
    fit_parameter, project, time_to_level, AutoForecaster, ForecastError,
    ForecastHorizon, ForecastPoint, TrendModel,
};
use twin_core::health::{
    classify_level, detect_alarms, diagnose, snapshot_area, Alarm, AreaHealthSnapshot,
    DiagnosisResult, HealthError,
};
use twin_core::level::HealthLevel;
use twin_core::rollup::{building_status, IntegratedStatus, LevelTriple, RollupError};
use twin_core::telemetry::{ContextRecord, HistoryWindow, TelemetryError, TelemetryStore};
use twin_core::timefmt::{self, Timestamp};
use twin_core::workorder::{
    manual_cm_order, pdm_order, CalendarDue, RaiseOutcome, Slot, WorkOrder, WorkOrderBook,
    WorkOrderError, WorkOrderKind, WorkOrderStatus,
};

use crate::config::EngineConfig;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown path {0}")]
    UnknownPath(String),
    #[error("unknown work order {0}")]
    UnknownOrder(String),
    #[error("no data for {0}")]
    NoData(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error("an active {kind:?} order already exists for this path: {existing}")]
    DuplicateOrder { kind: WorkOrderKind, existing: String },
    #[error(transparent)]
    IllegalTransition(WorkOrderError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{0}")]
    Internal(String),
}

impl EngineError {
    /// Stable machine-readable code used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::UnknownPath(_) => "UnknownPath",
            EngineError::UnknownOrder(_) => "UnknownOrder",
            EngineError::NoData(_) => "NoData",
            EngineError::InvalidInput(_) => "InvalidInput",
            EngineError::DuplicateOrder { .. } => "DuplicateOrder",
            EngineError::IllegalTransition(_) => "IllegalTransition",
            EngineError::Log(_) => "LogWriteFailed",
            EngineError::Internal(_) => "Internal",
        }
    }
}

impl From<HealthError> for EngineError {
    fn from(e: HealthError) -> Self {
        match e {
            HealthError::UnknownPath(p) => EngineError::UnknownPath(p),
            HealthError::OutOfDomainValue { .. } => EngineError::InvalidInput(e.to_string()),
            other => EngineError::Internal(other.to_string()),
        }
    }
}

impl From<TelemetryError> for EngineError {
    fn from(e: TelemetryError) -> Self {
        match e {
            TelemetryError::UnknownPath(p) => EngineError::UnknownPath(p),
            other => EngineError::InvalidInput(other.to_string()),
        }
    }
}

impl From<RollupError> for EngineError {
    fn from(e: RollupError) -> Self {
        EngineError::Internal(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaLevel {
    pub path: AssetPath,
    pub level: Option<HealthLevel>,
}

/// Outcome of one evaluation, also pushed to stream subscribers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTick {
    #[serde(with = "timefmt")]
    pub ts: Timestamp,
    pub building: LevelTriple,
    pub areas: Vec<AreaLevel>,
    pub active_alarms: Vec<Alarm>,
    pub new_alarms: Vec<String>,
    pub forecasts_refreshed: bool,
    pub raised: Vec<String>,
    pub scheduled: Vec<String>,
    pub overflow: Vec<String>,
}

/// Read-only half of a tick: everything that needs the store but mutates nothing.
#[derive(Debug, Clone)]
pub struct TickPlan {
    ts: Timestamp,
    snapshots: Vec<AreaHealthSnapshot>,
    alarms: Vec<(Alarm, Option<DiagnosisResult>)>,
    forecasts: Option<(NaiveDate, BTreeMap<AssetPath, TrendModel>)>,
}

#[derive(Debug, Clone, Default)]
struct ForecastCache {
    day: Option<NaiveDate>,
    models: BTreeMap<AssetPath, TrendModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusView {
    #[serde(with = "timefmt::option")]
    pub as_of: Option<Timestamp>,
    pub building: IntegratedStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryBucket {
    #[serde(with = "timefmt")]
    pub start: Timestamp,
    pub mean: Option<f64>,
    pub count: usize,
    pub level: Option<HealthLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryView {
    pub path: AssetPath,
    pub window: HistoryWindow,
    pub unit: String,
    pub bucket_seconds: i64,
    #[serde(with = "timefmt")]
    pub end: Timestamp,
    pub buckets: Vec<HistoryBucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastView {
    #[serde(flatten)]
    pub point: ForecastPoint,
    pub current_level: Option<HealthLevel>,
    pub pdm_level: u8,
    /// Days until the trend reaches `pdm_level`, if it ever does.
    pub days_to_breach: Option<f64>,
    /// Predictive and preventive orders for this parameter.
    pub orders: Vec<WorkOrder>,
}

/// Events of a telemetry file released in timestamp order as simulated time passes.
#[derive(Debug, Clone, Default)]
pub struct FeedCursor {
    events: Vec<LogEvent>,
    next: usize,
}

impl FeedCursor {
    pub fn new(mut events: Vec<LogEvent>) -> Self {
        events.retain(|e| matches!(e, LogEvent::Reading(_) | LogEvent::Context(_)));
        events.sort_by_key(LogEvent::ts);
        Self { events, next: 0 }
    }

    /// Events with `ts <= until` not yet released.
    pub fn release(&mut self, until: Timestamp) -> &[LogEvent] {
        let start = self.next;
        while self.next < self.events.len() && self.events[self.next].ts() <= until {
            self.next += 1;
        }
        &self.events[start..self.next]
    }

    pub fn first_ts(&self) -> Option<Timestamp> {
        self.events.first().map(LogEvent::ts)
    }

    pub fn last_ts(&self) -> Option<Timestamp> {
        self.events.last().map(LogEvent::ts)
    }

    pub fn is_exhausted(&self) -> bool {
        self.next >= self.events.len()
    }
}

/// The whole twin: asset tree, telemetry, alarms, forecasts and work orders.
#[derive(Debug)]
pub struct TwinState {
    config: EngineConfig,
    tree: Arc<AssetTree>,
    store: TelemetryStore,
    orders: WorkOrderBook,
    alarms: BTreeMap<String, AlarmRecord>,
    forecasts: ForecastCache,
    area_paths: Vec<AssetPath>,
    log: Option<EventLog>,
}

impl TwinState {
    pub fn new(tree: Arc<AssetTree>, config: EngineConfig) -> Self {
        let area_paths = tree
            .walk()
            .into_iter()
            .filter(|(_, n)| n.kind != NodeKind::Parameter && n.children.iter().any(|c| c.kind == NodeKind::Parameter))
            .map(|(p, _)| p)
            .collect();
        Self {
            store: TelemetryStore::new(tree.clone()),
            config,
            tree,
            orders: WorkOrderBook::new(),
            alarms: BTreeMap::new(),
            forecasts: ForecastCache::default(),
            area_paths,
            log: None,
        }
    }

    /// Rebuilds state from logged events without re-logging them.
    pub fn restore(
        tree: Arc<AssetTree>,
        config: EngineConfig,
        events: impl IntoIterator<Item = LogEvent>,
    ) -> Result<Self, EngineError> {
        let mut state = Self::new(tree, config);
        for event in events {
            state.apply(event)?;
        }
        Ok(state)
    }

    /// Appends every subsequent mutation to `log`.
    pub fn with_log(mut self, log: EventLog) -> Self {
        self.log = Some(log);
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn tree(&self) -> &Arc<AssetTree> {
        &self.tree
    }

    pub fn store(&self) -> &TelemetryStore {
        &self.store
    }

    pub fn orders(&self) -> &WorkOrderBook {
        &self.orders
    }

    pub fn alarms(&self) -> impl Iterator<Item = &AlarmRecord> {
        self.alarms.values()
    }

    /// Newest telemetry timestamp: the instant every read view is evaluated at.
    pub fn as_of(&self) -> Option<Timestamp> {
        self.store.newest_ts()
    }

    fn apply(&mut self, event: LogEvent) -> Result<(), EngineError> {
        match event {
            LogEvent::Reading(r) => {
                self.invalidate_forecasts(r.ts);
                self.store.ingest(&r)?;
            }
            LogEvent::Context(c) => {
                self.store.ingest_context(&c)?;
            }
            LogEvent::Alarm(a) => {
                self.alarms.insert(a.alarm.id.clone(), a);
            }
            LogEvent::WorkOrder(o) => self.orders.upsert(o),
        }
        Ok(())
    }

    fn invalidate_forecasts(&mut self, ts: Timestamp) {
        if let Some(day) = self.forecasts.day {
            if ts < day.and_hms_opt(0, 0, 0).expect("midnight").and_utc() {
                self.forecasts = ForecastCache::default();
            }
        }
    }

    fn write(&mut self, events: &[LogEvent]) -> Result<(), EngineError> {
        if let Some(log) = self.log.as_mut() {
            log.append_all(events)?;
        }
        Ok(())
    }

    /// Accepts one telemetry event. Returns `false` when an identical event is already stored.
    pub fn ingest(&mut self, event: LogEvent) -> Result<bool, EngineError> {
        match &event {
            LogEvent::Reading(r) => {
                self.store.check(r)?;
                if self.store.contains(r) {
                    return Ok(false);
                }
            }
            LogEvent::Context(c) => {
                c.check()?;
                if self.store.contains_context(c) {
                    return Ok(false);
                }
            }
            _ => return Err(EngineError::InvalidInput("only readings and context records can be ingested".into())),
        }
        self.write(std::slice::from_ref(&event))?;
        self.apply(event)?;
        Ok(true)
    }

    fn fit_all(&self, at: Timestamp) -> BTreeMap<AssetPath, TrendModel> {
        let forecaster = AutoForecaster::default();
        self.tree
            .parameters()
            .into_iter()
            .filter_map(|(path, _)| {
                fit_parameter(&self.tree, &self.store, &path, at, &forecaster).ok().map(|m| (path, m))
            })
            .collect()
    }

    /// Models for `at`'s day, from the cache when it matches.
    fn models_for(&self, at: Timestamp) -> std::borrow::Cow<'_, BTreeMap<AssetPath, TrendModel>> {
        if self.forecasts.day == Some(at.date_naive()) {
            std::borrow::Cow::Borrowed(&self.forecasts.models)
        } else {
            std::borrow::Cow::Owned(self.fit_all(at))
        }
    }

    /// Computes snapshots, alarms, diagnoses and (on the first tick of a day) forecasts.
    pub fn prepare(&self, ts: Timestamp) -> Result<TickPlan, EngineError> {
        let mut snapshots = Vec::with_capacity(self.area_paths.len());
        let mut alarms = Vec::new();
        for path in &self.area_paths {
            let node = self.tree.resolve(path).map_err(|e| EngineError::Internal(e.to_string()))?;
            let snap = snapshot_area(&self.tree, &self.store, path, ts, self.config.policies.spec_for(node))?;
            for alarm in detect_alarms(&snap, self.config.alarm_level) {
                let diagnosis = if self.alarms.contains_key(&alarm.id) {
                    None
                } else {
                    Some(diagnose(&alarm, &self.tree, &self.store, &self.config.diagnosis)?)
                };
                alarms.push((alarm, diagnosis));
            }
            snapshots.push(snap);
        }
        let day = ts.date_naive();
        let forecasts = (self.forecasts.day != Some(day)).then(|| (day, self.fit_all(ts)));
        Ok(TickPlan { ts, snapshots, alarms, forecasts })
    }

    /// Raises and schedules orders for a prepared tick, logs every change, then applies it.
    pub fn commit(&mut self, plan: TickPlan) -> Result<EvaluationTick, EngineError> {
        let ts = plan.ts;
        let policy = self.config.workorders.clone();
        let mut orders = self.orders.clone();
        let mut events = Vec::new();
        let mut new_alarms = Vec::new();
        let mut raised = Vec::new();
        let mut raise = |orders: &mut WorkOrderBook, order: WorkOrder, events: &mut Vec<LogEvent>| {
            if let RaiseOutcome::Created(o) = orders.raise(order) {
                raised.push(o.id.clone());
                events.push(LogEvent::WorkOrder(o));
            }
        };

        for (alarm, diagnosis) in &plan.alarms {
            let Some(diagnosis) = diagnosis else { continue };
            if self.alarms.contains_key(&alarm.id) {
                continue;
            }
            new_alarms.push(alarm.id.clone());
            events.push(LogEvent::Alarm(AlarmRecord { alarm: alarm.clone(), detected_at: ts, diagnosis: diagnosis.clone() }));
            raise(&mut orders, twin_core::workorder::cm_order(alarm, ts, &policy), &mut events);
        }

        let current: HashMap<AssetPath, HealthLevel> = plan
            .snapshots
            .iter()
            .flat_map(|s| s.entries.iter().filter_map(|e| e.level.map(|l| (s.path.join(&e.parameter), l))))
            .collect();
        let refreshed = plan.forecasts.is_some();
        if let Some((_, models)) = &plan.forecasts {
            for (path, model) in models {
                let (Ok(node), Some(&now_level)) = (self.tree.resolve(path), current.get(path)) else {
                    continue;
                };
                let days = time_to_level(model, node, self.config.pdm_level);
                for horizon in ForecastHorizon::ALL {
                    let point = project(node, path, model, horizon).map_err(forecast_error)?;
                    if let Some(order) = pdm_order(&point, now_level, self.config.pdm_level, days, ts, &policy) {
                        raise(&mut orders, order, &mut events);
                        break;
                    }
                }
            }
        }

        let schedule: Vec<CalendarDue> = self
            .config
            .pm_schedule
            .iter()
            .map(|e| {
                let mut e = e.clone();
                if let Some(done) = orders.last_pm_done(&e.path) {
                    e.last_done = e.last_done.max(done);
                }
                e
            })
            .collect();
        for order in twin_core::workorder::pm_orders(&schedule, ts, &policy) {
            raise(&mut orders, order, &mut events);
        }

        let (changed, sched) = orders.schedule_open(&self.config.calendar, ts);
        let scheduled = changed.iter().map(|o| o.id.clone()).collect();
        events.extend(changed.into_iter().map(LogEvent::WorkOrder));

        self.write(&events)?;
        self.orders = orders;
        for event in events {
            if let LogEvent::Alarm(a) = event {
                self.alarms.insert(a.alarm.id.clone(), a);
            }
        }
        if let Some((day, models)) = plan.forecasts {
            self.forecasts = ForecastCache { day: Some(day), models };
        }

        let building = self.building_at(ts)?.levels();
        Ok(EvaluationTick {
            ts,
            building,
            areas: plan.snapshots.iter().map(|s| AreaLevel { path: s.path.clone(), level: s.area_level }).collect(),
            active_alarms: plan.alarms.into_iter().map(|(a, _)| a).collect(),
            new_alarms,
            forecasts_refreshed: refreshed,
            raised,
            scheduled,
            overflow: sched.overflow,
        })
    }

    pub fn evaluate_once(&mut self, ts: Timestamp) -> Result<EvaluationTick, EngineError> {
        let plan = self.prepare(ts)?;
        self.commit(plan)
    }

    fn building_at(&self, at: Timestamp) -> Result<IntegratedStatus, EngineError> {
        let models = self.models_for(at);
        let mut leaves = HashMap::new();
        for (path, node) in self.tree.parameters() {
            let now = match self.store.latest_at(&path, at)? {
                Some(r) => Some(classify_level(node, r.value)?),
                None => None,
            };
            let (at_m3, at_m6) = match models.get(&path) {
                Some(m) => (
                    Some(project(node, &path, m, ForecastHorizon::M3).map_err(forecast_error)?.predicted_level),
                    Some(project(node, &path, m, ForecastHorizon::M6).map_err(forecast_error)?.predicted_level),
                ),
                None => (None, None),
            };
            leaves.insert(path, LevelTriple { now, at_m3, at_m6 });
        }
        Ok(building_status(&self.tree, &leaves, &self.config.policies)?)
    }

    /// Integrated status of the whole building as of the newest telemetry.
    pub fn status(&self) -> Result<StatusView, EngineError> {
        let as_of = self.as_of();
        let building = match as_of {
            Some(at) => self.building_at(at)?,
            None => building_status(&self.tree, &HashMap::new(), &self.config.policies)?,
        };
        Ok(StatusView { as_of, building })
    }

    fn view_time(&self) -> Timestamp {
        self.as_of().unwrap_or(DateTime::UNIX_EPOCH)
    }

    fn resolve(&self, path: &AssetPath) -> Result<&AssetNode, EngineError> {
        self.tree.resolve(path).map_err(|_| EngineError::UnknownPath(path.to_string()))
    }

    fn parameter(&self, path: &AssetPath) -> Result<&AssetNode, EngineError> {
        let node = self.resolve(path)?;
        if node.kind != NodeKind::Parameter {
            return Err(EngineError::InvalidInput(format!("{path} is not a parameter")));
        }
        Ok(node)
    }

    pub fn snapshot(&self, path: &AssetPath) -> Result<AreaHealthSnapshot, EngineError> {
        let node = self.resolve(path)?;
        if !self.area_paths.contains(path) {
            return Err(EngineError::InvalidInput(format!("{path} has no parameters")));
        }
        Ok(snapshot_area(&self.tree, &self.store, path, self.view_time(), self.config.policies.spec_for(node))?)
    }

    pub fn history(&self, path: &AssetPath, window: HistoryWindow) -> Result<HistoryView, EngineError> {
        let node = self.parameter(path)?;
        let width = window.bucket_width();
        let w = width.num_seconds();
        let end = DateTime::from_timestamp(self.view_time().timestamp().div_euclid(w) * w + w, 0)
            .ok_or_else(|| EngineError::Internal("timestamp overflow".into()))?;
        let buckets = self
            .store
            .window_series(path, window, end)?
            .into_iter()
            .map(|b| {
                let level = b.mean.map(|m| classify_level(node, node.value_domain().clamp(m))).transpose()?;
                Ok(HistoryBucket { start: b.start, mean: b.mean, count: b.count, level })
            })
            .collect::<Result<_, HealthError>>()?;
        Ok(HistoryView {
            path: path.clone(),
            window,
            unit: node.unit.clone().unwrap_or_default(),
            bucket_seconds: w,
            end,
            buckets,
        })
    }

    pub fn forecast(&self, path: &AssetPath, horizon: ForecastHorizon) -> Result<ForecastView, EngineError> {
        let node = self.parameter(path)?;
        let at = self.view_time();
        let models = self.models_for(at);
        let model = models.get(path).ok_or_else(|| EngineError::NoData(path.to_string()))?;
        let point = project(node, path, model, horizon).map_err(forecast_error)?;
        let current_level = match self.store.latest_at(path, at)? {
            Some(r) => Some(classify_level(node, r.value)?),
            None => None,
        };
        let orders = self
            .orders
            .iter()
            .filter(|o| &o.path == path && matches!(o.kind, WorkOrderKind::PdM | WorkOrderKind::PM))
            .cloned()
            .collect();
        Ok(ForecastView {
            days_to_breach: time_to_level(model, node, self.config.pdm_level),
            point,
            current_level,
            pdm_level: self.config.pdm_level,
            orders,
        })
    }

    pub fn latest_context(&self) -> Option<&ContextRecord> {
        self.store.latest_context(None)
    }

    /// Work orders, optionally filtered by status, most urgent first.
    pub fn list_orders(&self, status: Option<WorkOrderStatus>) -> Vec<WorkOrder> {
        let mut out: Vec<WorkOrder> =
            self.orders.iter().filter(|o| status.is_none_or(|s| o.status == s)).cloned().collect();
        out.sort_by(|a, b| (a.priority, a.due_by, &a.id).cmp(&(b.priority, b.due_by, &b.id)));
        out
    }

    /// Raises a corrective order on any node of the tree at a user's request.
    pub fn create_manual(&mut self, path: &AssetPath, note: String, now: Timestamp) -> Result<WorkOrder, EngineError> {
        self.resolve(path)?;
        let order = manual_cm_order(path.clone(), note, now, &self.config.workorders);
        if let Some(existing) = self.orders.active(path, WorkOrderKind::CM) {
            return Err(EngineError::DuplicateOrder { kind: WorkOrderKind::CM, existing: existing.id.clone() });
        }
        if self.orders.get(&order.id).is_some() {
            return Err(EngineError::DuplicateOrder { kind: WorkOrderKind::CM, existing: order.id });
        }
        self.write(&[LogEvent::WorkOrder(order.clone())])?;
        self.orders.upsert(order.clone());
        Ok(order)
    }

    pub fn transition_order(
        &mut self,
        id: &str,
        to: WorkOrderStatus,
        slot: Option<Slot>,
        now: Timestamp,
    ) -> Result<WorkOrder, EngineError> {
        let order = self.orders.get(id).ok_or_else(|| EngineError::UnknownOrder(id.to_string()))?;
        let next = twin_core::workorder::transition(order, to, slot, now).map_err(|e| match e {
            WorkOrderError::MissingSlot => EngineError::InvalidInput(e.to_string()),
            WorkOrderError::UnknownOrder(id) => EngineError::UnknownOrder(id),
            other => EngineError::IllegalTransition(other),
        })?;
        self.write(&[LogEvent::WorkOrder(next.clone())])?;
        self.orders.upsert(next.clone());
        Ok(next)
    }
}

fn forecast_error(e: ForecastError) -> EngineError {
    match e {
        ForecastError::EmptySeries => EngineError::NoData("empty series".into()),
        ForecastError::UnknownPath(p) => EngineError::UnknownPath(p),
        other => EngineError::Internal(other.to_string()),
    }
}

/// Ticks every evaluation interval from `start` through `end`, releasing feed events up to each
/// tick before evaluating it.
pub fn drive(
    state: &mut TwinState,
    feed: &mut FeedCursor,
    start: Timestamp,
    end: Timestamp,
    mut on_tick: impl FnMut(&TwinState, &EvaluationTick),
) -> Result<(), EngineError> {
    let interval = state.config.interval();
    let mut ts = start;
    while ts <= end {
        for event in feed.release(ts).to_vec() {
            state.ingest(event)?;
        }
        let tick = state.evaluate_once(ts)?;
        on_tick(state, &tick);
        ts += interval;
    }
    Ok(())
}

/// First tick instant at or after `ts` on the evaluation grid anchored at the Unix epoch.
pub fn align_up(ts: Timestamp, interval: Duration) -> Timestamp {
    let w = interval.num_seconds().max(1);
    let t = ts.timestamp();
    let aligned = t.div_euclid(w) * w;
    let aligned = if aligned < t { aligned + w } else { aligned };
    DateTime::from_timestamp(aligned, 0).unwrap_or(ts)
}
