//! Prescriptive stage: corrective (CM), predictive (PdM) and preventive (PM) work orders, their
//! lifecycle, and greedy priority scheduling against technician capacity.

use std::collections::{BTreeMap, HashMap};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::AssetPath;
use crate::forecast::{ForecastHorizon, ForecastPoint};
use crate::health::Alarm;
use crate::level::HealthLevel;
use crate::timefmt::{self, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WorkOrderKind {
    CM,
    PdM,
    PM,
}

impl WorkOrderKind {
    /// 1 is the highest priority.
    pub fn priority(self) -> u8 {
        match self {
            WorkOrderKind::CM => 1,
            WorkOrderKind::PdM => 2,
            WorkOrderKind::PM => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorkOrderStatus {
    Open,
    Scheduled,
    InProgress,
    Done,
    Cancelled,
}

impl WorkOrderStatus {
    pub const ALL: [WorkOrderStatus; 5] = [
        WorkOrderStatus::Open,
        WorkOrderStatus::Scheduled,
        WorkOrderStatus::InProgress,
        WorkOrderStatus::Done,
        WorkOrderStatus::Cancelled,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, WorkOrderStatus::Done | WorkOrderStatus::Cancelled)
    }

    pub fn can_transition_to(self, to: WorkOrderStatus) -> bool {
        use WorkOrderStatus::*;
        matches!(
            (self, to),
            (Open, Scheduled) | (Scheduled, InProgress) | (InProgress, Done) | (Open, Cancelled) | (Scheduled, Cancelled)
        )
    }

    /// Whether an order in this status carries a schedule slot.
    pub fn has_slot(self) -> bool {
        matches!(self, WorkOrderStatus::Scheduled | WorkOrderStatus::InProgress | WorkOrderStatus::Done)
    }

    pub fn parse(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| format!("{s:?}").eq_ignore_ascii_case(text))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub day: NaiveDate,
    pub tech: String,
}

/// What caused a work order to be raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trigger {
    Alarm {
        alarm_id: String,
        level: HealthLevel,
        observed_value: f64,
    },
    ForecastBreach {
        horizon: ForecastHorizon,
        predicted_value: f64,
        predicted_level: HealthLevel,
        current_level: HealthLevel,
        days_to_breach: Option<f64>,
    },
    CalendarDue {
        task: String,
        interval_days: u32,
        #[serde(with = "timefmt")]
        last_done: Timestamp,
    },
    Manual {
        note: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkOrder {
    pub id: String,
    pub kind: WorkOrderKind,
    pub path: AssetPath,
    pub priority: u8,
    #[serde(with = "timefmt")]
    pub created_at: Timestamp,
    #[serde(with = "timefmt")]
    pub due_by: Timestamp,
    pub status: WorkOrderStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<Slot>,
    pub trigger: Trigger,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "timefmt::option")]
    pub completed_at: Option<Timestamp>,
}

impl WorkOrder {
    fn new(kind: WorkOrderKind, path: AssetPath, now: Timestamp, due_by: Timestamp, trigger: Trigger) -> Self {
        let id = format!(
            "{:?}-{}",
            kind,
            crate::short_hash(&format!("{kind:?}|{path}|{}", timefmt::format(&now)))
        );
        WorkOrder {
            id,
            kind,
            path,
            priority: kind.priority(),
            created_at: now,
            due_by,
            status: WorkOrderStatus::Open,
            slot: None,
            trigger,
            completed_at: None,
        }
    }
}

/// Tunable constants of order creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkOrderPolicy {
    pub cm_due_days: i64,
    pub pdm_lead_days: i64,
    pub pm_due_days: i64,
}

impl Default for WorkOrderPolicy {
    fn default() -> Self {
        Self { cm_due_days: 2, pdm_lead_days: 14, pm_due_days: 7 }
    }
}

/// Corrective order for an alarm, due `cm_due_days` after creation.
pub fn cm_order(alarm: &Alarm, now: Timestamp, policy: &WorkOrderPolicy) -> WorkOrder {
    WorkOrder::new(
        WorkOrderKind::CM,
        alarm.path.clone(),
        now,
        now + Duration::days(policy.cm_due_days),
        Trigger::Alarm { alarm_id: alarm.id.clone(), level: alarm.level, observed_value: alarm.observed_value },
    )
}

pub fn manual_cm_order(path: AssetPath, note: String, now: Timestamp, policy: &WorkOrderPolicy) -> WorkOrder {
    WorkOrder::new(
        WorkOrderKind::CM,
        path,
        now,
        now + Duration::days(policy.cm_due_days),
        Trigger::Manual { note },
    )
}

/// Predictive order when the forecast breaches `pdm_level` while the parameter is still healthier
/// than that. Due at the earlier of the horizon and the projected breach, minus the lead time,
/// never before `now`.
pub fn pdm_order(
    point: &ForecastPoint,
    current: HealthLevel,
    pdm_level: u8,
    days_to_breach: Option<f64>,
    now: Timestamp,
    policy: &WorkOrderPolicy,
) -> Option<WorkOrder> {
    if point.predicted_level.value() > pdm_level || current.value() < pdm_level + 1 {
        return None;
    }
    let horizon_secs = i64::from(point.horizon.days()) * 86_400;
    let breach_secs = days_to_breach.map_or(horizon_secs, |d| (d * 86_400.0).floor() as i64);
    let until = horizon_secs.min(breach_secs) - policy.pdm_lead_days * 86_400;
    let due_by = now + Duration::seconds(until.max(0));
    Some(WorkOrder::new(
        WorkOrderKind::PdM,
        point.path.clone(),
        now,
        due_by,
        Trigger::ForecastBreach {
            horizon: point.horizon,
            predicted_value: point.predicted_value,
            predicted_level: point.predicted_level,
            current_level: current,
            days_to_breach,
        },
    ))
}

/// A recurring preventive task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalendarDue {
    pub path: AssetPath,
    pub task: String,
    pub interval_days: u32,
    #[serde(with = "timefmt")]
    pub last_done: Timestamp,
}

/// PM orders for every entry whose interval has elapsed, ordered by path.
pub fn pm_orders(schedule: &[CalendarDue], now: Timestamp, policy: &WorkOrderPolicy) -> Vec<WorkOrder> {
    let mut due: Vec<&CalendarDue> = schedule
        .iter()
        .filter(|e| now - e.last_done >= Duration::days(i64::from(e.interval_days)))
        .collect();
    due.sort_by(|a, b| a.path.cmp(&b.path).then_with(|| a.task.cmp(&b.task)));
    due.into_iter()
        .map(|e| {
            WorkOrder::new(
                WorkOrderKind::PM,
                e.path.clone(),
                now,
                now + Duration::days(policy.pm_due_days),
                Trigger::CalendarDue { task: e.task.clone(), interval_days: e.interval_days, last_done: e.last_done },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Technician {
    pub id: String,
    pub capacity_per_day: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceCalendar {
    pub technicians: Vec<Technician>,
    pub horizon_days: u32,
}

impl Default for ResourceCalendar {
    fn default() -> Self {
        Self {
            technicians: vec![
                Technician { id: "tech-1".into(), capacity_per_day: 2 },
                Technician { id: "tech-2".into(), capacity_per_day: 2 },
            ],
            horizon_days: 14,
        }
    }
}

impl ResourceCalendar {
    pub fn check(&self) -> Result<(), WorkOrderError> {
        if self.technicians.is_empty() || self.technicians.iter().any(|t| t.capacity_per_day == 0) {
            return Err(WorkOrderError::InvalidCalendar);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub order_id: String,
    /// 1-based day of the plan; day 1 is the day of `now`.
    pub day_index: u32,
    pub slot: Slot,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub assignments: Vec<Assignment>,
    /// Orders that did not fit within the horizon; they stay open.
    pub overflow: Vec<String>,
}

/// Greedy priority scheduling.
///
/// Open orders are sorted by `(priority, due_by, id)` and each goes to the earliest day with
/// spare capacity; within a day the least-loaded technician wins, ties broken by technician id.
/// Orders already holding a slot inside the horizon consume capacity but are not moved.
pub fn schedule(orders: &[WorkOrder], calendar: &ResourceCalendar, now: Timestamp) -> SchedulePlan {
    let today = now.date_naive();
    let horizon = calendar.horizon_days as usize;
    let mut techs: Vec<&Technician> = calendar.technicians.iter().collect();
    techs.sort_by(|a, b| a.id.cmp(&b.id));
    let tech_index: HashMap<&str, usize> = techs.iter().enumerate().map(|(i, t)| (t.id.as_str(), i)).collect();
    let mut load = vec![vec![0u32; techs.len()]; horizon];

    for order in orders.iter().filter(|o| !o.status.is_terminal()) {
        if let Some(slot) = &order.slot {
            let offset = (slot.day - today).num_days();
            if let (Ok(d), Some(&t)) = (usize::try_from(offset), tech_index.get(slot.tech.as_str())) {
                if d < horizon {
                    load[d][t] += 1;
                }
            }
        }
    }

    let mut open: Vec<&WorkOrder> = orders.iter().filter(|o| o.status == WorkOrderStatus::Open).collect();
    open.sort_by(|a, b| (a.priority, a.due_by, &a.id).cmp(&(b.priority, b.due_by, &b.id)));

    let mut plan = SchedulePlan::default();
    for order in open {
        let placed = (0..horizon).find_map(|d| {
            techs
                .iter()
                .enumerate()
                .filter(|(t, tech)| load[d][*t] < tech.capacity_per_day)
                .min_by_key(|(t, tech)| (load[d][*t], tech.id.clone()))
                .map(|(t, _)| (d, t))
        });
        match placed {
            Some((d, t)) => {
                load[d][t] += 1;
                plan.assignments.push(Assignment {
                    order_id: order.id.clone(),
                    day_index: d as u32 + 1,
                    slot: Slot { day: today + Duration::days(d as i64), tech: techs[t].id.clone() },
                });
            }
            None => plan.overflow.push(order.id.clone()),
        }
    }
    plan
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkOrderError {
    #[error("illegal transition {from:?} -> {to:?}")]
    IllegalTransition { from: WorkOrderStatus, to: WorkOrderStatus },
    #[error("transition to Scheduled requires a slot")]
    MissingSlot,
    #[error("unknown work order {0}")]
    UnknownOrder(String),
    #[error("resource calendar needs at least one technician with positive capacity")]
    InvalidCalendar,
}

/// Applies a lifecycle transition, returning the updated order.
pub fn transition(
    order: &WorkOrder,
    to: WorkOrderStatus,
    slot: Option<Slot>,
    now: Timestamp,
) -> Result<WorkOrder, WorkOrderError> {
    if !order.status.can_transition_to(to) {
        return Err(WorkOrderError::IllegalTransition { from: order.status, to });
    }
    let mut next = order.clone();
    next.status = to;
    match to {
        WorkOrderStatus::Scheduled => next.slot = Some(slot.ok_or(WorkOrderError::MissingSlot)?),
        WorkOrderStatus::Cancelled => next.slot = None,
        WorkOrderStatus::Done => next.completed_at = Some(now),
        _ => {}
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RaiseOutcome {
    Created(WorkOrder),
    /// A non-terminal order of the same kind already exists for the path.
    Suppressed { existing: String },
}

impl RaiseOutcome {
    pub fn created(self) -> Option<WorkOrder> {
        match self {
            RaiseOutcome::Created(o) => Some(o),
            RaiseOutcome::Suppressed { .. } => None,
        }
    }
}

/// All work orders, enforcing at most one non-terminal order per `(path, kind)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkOrderBook {
    orders: BTreeMap<String, WorkOrder>,
}

impl WorkOrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &str) -> Option<&WorkOrder> {
        self.orders.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &WorkOrder> {
        self.orders.values()
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    pub fn active(&self, path: &AssetPath, kind: WorkOrderKind) -> Option<&WorkOrder> {
        self.orders.values().find(|o| o.kind == kind && &o.path == path && !o.status.is_terminal())
    }

    /// Adds a freshly raised order unless one is already active for its path and kind.
    pub fn raise(&mut self, order: WorkOrder) -> RaiseOutcome {
        if let Some(existing) = self.active(&order.path, order.kind) {
            return RaiseOutcome::Suppressed { existing: existing.id.clone() };
        }
        if let Some(existing) = self.orders.get(&order.id) {
            // same id means same (kind, path, created_at): already raised and since closed
            return RaiseOutcome::Suppressed { existing: existing.id.clone() };
        }
        self.orders.insert(order.id.clone(), order.clone());
        RaiseOutcome::Created(order)
    }

    pub fn raise_cm(&mut self, alarm: &Alarm, now: Timestamp, policy: &WorkOrderPolicy) -> RaiseOutcome {
        self.raise(cm_order(alarm, now, policy))
    }

    pub fn raise_pm(&mut self, schedule: &[CalendarDue], now: Timestamp, policy: &WorkOrderPolicy) -> Vec<WorkOrder> {
        pm_orders(schedule, now, policy).into_iter().filter_map(|o| self.raise(o).created()).collect()
    }

    /// Replaces the stored state of an order, e.g. when replaying a log.
    pub fn upsert(&mut self, order: WorkOrder) {
        self.orders.insert(order.id.clone(), order);
    }

    pub fn transition(
        &mut self,
        id: &str,
        to: WorkOrderStatus,
        slot: Option<Slot>,
        now: Timestamp,
    ) -> Result<WorkOrder, WorkOrderError> {
        let order = self.orders.get(id).ok_or_else(|| WorkOrderError::UnknownOrder(id.to_string()))?;
        let next = transition(order, to, slot, now)?;
        self.orders.insert(id.to_string(), next.clone());
        Ok(next)
    }

    /// Schedules every open order and moves placed ones to `Scheduled`. Returns the updated
    /// orders and the plan.
    pub fn schedule_open(&mut self, calendar: &ResourceCalendar, now: Timestamp) -> (Vec<WorkOrder>, SchedulePlan) {
        let all: Vec<WorkOrder> = self.orders.values().cloned().collect();
        let plan = schedule(&all, calendar, now);
        let mut changed = Vec::with_capacity(plan.assignments.len());
        for a in &plan.assignments {
            let updated = self
                .transition(&a.order_id, WorkOrderStatus::Scheduled, Some(a.slot.clone()), now)
                .expect("scheduler only assigns open orders");
            changed.push(updated);
        }
        (changed, plan)
    }

    /// Latest completion time of a PM order for `path`, if any.
    pub fn last_pm_done(&self, path: &AssetPath) -> Option<Timestamp> {
        self.orders
            .values()
            .filter(|o| o.kind == WorkOrderKind::PM && &o.path == path)
            .filter_map(|o| o.completed_at)
            .max()
    }
}
