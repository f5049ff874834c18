//! Predictive stage: fit a degradation trend to a parameter's daily history and project it to the
//! 3-month and 6-month horizons.
//!
//! The default forecaster is Holt's linear-trend exponential smoothing:
//!
//! ```text
//! level_1 = y_1,  trend_1 = (y_2 - y_1) / (d_2 - d_1)
//! level_t = α y_t + (1 - α)(level_{t-1} + Δ_t trend_{t-1})
//! trend_t = β (level_t - level_{t-1}) / Δ_t + (1 - β) trend_{t-1}
//! forecast(h) = level_n + h trend_n
//! ```
//!
//! where `Δ_t` is the spacing in days between consecutive points (1 for a gap-free daily
//! series, which reduces to the textbook recursion). Series shorter than 14 points fall back to a
//! naive last-value model.

use chrono::Duration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{AssetNode, AssetPath, AssetTree, Direction, NodeKind, ValueDomain};
use crate::health::{classify_level, HealthError};
use crate::level::HealthLevel;
use crate::telemetry::{TelemetryError, TelemetryStore};
use crate::timefmt::{self, Timestamp};

pub const DEFAULT_ALPHA: f64 = 0.3;
pub const DEFAULT_BETA: f64 = 0.1;
/// Minimum number of daily points for a Holt fit.
pub const MIN_HOLT_POINTS: usize = 14;
/// Trailing training window in days.
pub const TRAINING_DAYS: usize = 90;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForecastError {
    #[error("no data to fit")]
    EmptySeries,
    #[error("unknown parameter path {0}")]
    UnknownPath(String),
    #[error("smoothing factors must lie in (0, 1)")]
    InvalidSmoothing,
    #[error(transparent)]
    Health(#[from] HealthError),
}

impl From<TelemetryError> for ForecastError {
    fn from(e: TelemetryError) -> Self {
        ForecastError::UnknownPath(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastHorizon {
    M3,
    M6,
}

impl ForecastHorizon {
    pub const ALL: [ForecastHorizon; 2] = [ForecastHorizon::M3, ForecastHorizon::M6];

    pub fn days(self) -> u32 {
        match self {
            ForecastHorizon::M3 => 90,
            ForecastHorizon::M6 => 180,
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "m3" => Some(ForecastHorizon::M3),
            "m6" => Some(ForecastHorizon::M6),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrendMethod {
    HoltLinear,
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub method: TrendMethod,
    pub level: f64,
    /// Change per day.
    pub trend: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n_points: usize,
    #[serde(with = "timefmt::option", default)]
    pub fitted_at: Option<Timestamp>,
    /// RMS of one-step-ahead fit residuals (0 for the naive model).
    pub residual_sigma: f64,
}

/// One point of a daily-aggregated series. `day` is measured in days on any fixed origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyPoint {
    pub day: f64,
    pub value: f64,
}

impl DailyPoint {
    pub fn new(day: f64, value: f64) -> Self {
        Self { day, value }
    }
}

/// Fits a trend model to an ascending daily series.
pub trait Forecaster {
    fn fit(&self, series: &[DailyPoint]) -> Result<TrendModel, ForecastError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoltLinear {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for HoltLinear {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, beta: DEFAULT_BETA }
    }
}

impl HoltLinear {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ForecastError> {
        let ok = |x: f64| x.is_finite() && x > 0.0 && x < 1.0;
        if ok(alpha) && ok(beta) {
            Ok(Self { alpha, beta })
        } else {
            Err(ForecastError::InvalidSmoothing)
        }
    }
}

impl Forecaster for HoltLinear {
    fn fit(&self, series: &[DailyPoint]) -> Result<TrendModel, ForecastError> {
        let (first, rest) = series.split_first().ok_or(ForecastError::EmptySeries)?;
        let Some(second) = rest.first() else {
            return Naive.fit(series);
        };
        let (a, b) = (self.alpha, self.beta);
        let mut level = first.value;
        let mut trend = (second.value - first.value) / (second.day - first.day);
        let mut prev_day = first.day;
        let mut sq_sum = 0.0;
        let mut residuals = 0usize;
        for (i, p) in rest.iter().enumerate() {
            let dt = p.day - prev_day;
            let predicted = level + dt * trend;
            // the first step reproduces y_2 exactly by construction
            if i > 0 {
                sq_sum += (p.value - predicted).powi(2);
                residuals += 1;
            }
            let prev_level = level;
            level = a * p.value + (1.0 - a) * predicted;
            trend = b * (level - prev_level) / dt + (1.0 - b) * trend;
            prev_day = p.day;
        }
        let residual_sigma = if residuals > 0 { (sq_sum / residuals as f64).sqrt() } else { 0.0 };
        Ok(TrendModel {
            method: TrendMethod::HoltLinear,
            level,
            trend,
            alpha: a,
            beta: b,
            n_points: series.len(),
            fitted_at: None,
            residual_sigma,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Naive;

impl Forecaster for Naive {
    fn fit(&self, series: &[DailyPoint]) -> Result<TrendModel, ForecastError> {
        let last = series.last().ok_or(ForecastError::EmptySeries)?;
        Ok(TrendModel {
            method: TrendMethod::Naive,
            level: last.value,
            trend: 0.0,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            n_points: series.len(),
            fitted_at: None,
            residual_sigma: 0.0,
        })
    }
}

/// Holt when at least [`MIN_HOLT_POINTS`] points are available, naive otherwise.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AutoForecaster {
    pub holt: HoltLinear,
}

impl Forecaster for AutoForecaster {
    fn fit(&self, series: &[DailyPoint]) -> Result<TrendModel, ForecastError> {
        if series.len() >= MIN_HOLT_POINTS {
            self.holt.fit(series)
        } else {
            Naive.fit(series)
        }
    }
}

/// Default fit: Holt (α=0.3, β=0.1) for ≥14 points, naive otherwise.
pub fn fit(series: &[DailyPoint]) -> Result<TrendModel, ForecastError> {
    AutoForecaster::default().fit(series)
}

/// `level + trend × horizon_days`, clamped to `domain`.
pub fn forecast_value(model: &TrendModel, horizon: ForecastHorizon, domain: &ValueDomain) -> f64 {
    domain.clamp(model.level + model.trend * f64::from(horizon.days()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub path: AssetPath,
    pub horizon: ForecastHorizon,
    pub predicted_value: f64,
    pub predicted_level: HealthLevel,
    pub interval: (f64, f64),
    pub model: TrendModel,
}

/// Midnight (UTC) of `at`'s day: the exclusive end of the training window. Fits are identical
/// for every instant of the same day.
pub fn training_end(at: Timestamp) -> Timestamp {
    at.date_naive().and_hms_opt(0, 0, 0).expect("midnight").and_utc()
}

/// Daily means over the `TRAINING_DAYS` complete days before `at`, empty days skipped.
pub fn daily_series(
    store: &TelemetryStore,
    path: &AssetPath,
    at: Timestamp,
) -> Result<Vec<DailyPoint>, ForecastError> {
    let start = training_end(at) - Duration::days(TRAINING_DAYS as i64);
    let buckets = store.bucket_series(path, start, Duration::days(1), TRAINING_DAYS)?;
    Ok(buckets
        .iter()
        .enumerate()
        .filter_map(|(i, b)| b.mean.map(|m| DailyPoint::new(i as f64, m)))
        .collect())
}

/// Fits `forecaster` to the trailing daily history of `path` as of `at`.
pub fn fit_parameter(
    tree: &AssetTree,
    store: &TelemetryStore,
    path: &AssetPath,
    at: Timestamp,
    forecaster: &dyn Forecaster,
) -> Result<TrendModel, ForecastError> {
    tree.resolve_kind(path, NodeKind::Parameter)
        .map_err(|_| ForecastError::UnknownPath(path.to_string()))?;
    let series = daily_series(store, path, at)?;
    let mut model = forecaster.fit(&series)?;
    model.fitted_at = Some(training_end(at));
    Ok(model)
}

/// Projects a fitted model to `horizon` and classifies the result.
pub fn project(
    node: &AssetNode,
    path: &AssetPath,
    model: &TrendModel,
    horizon: ForecastHorizon,
) -> Result<ForecastPoint, ForecastError> {
    let domain = node.value_domain();
    let predicted_value = forecast_value(model, horizon, &domain);
    let predicted_level = classify_level(node, predicted_value)?;
    let half = match model.method {
        TrendMethod::HoltLinear => 1.96 * model.residual_sigma,
        TrendMethod::Naive => 0.0,
    };
    let interval = (domain.clamp(predicted_value - half), domain.clamp(predicted_value + half));
    Ok(ForecastPoint {
        path: path.clone(),
        horizon,
        predicted_value,
        predicted_level,
        interval,
        model: model.clone(),
    })
}

/// Fits the trailing 90-day daily history of `path` and predicts value and level at `horizon`.
pub fn forecast_level(
    tree: &AssetTree,
    store: &TelemetryStore,
    path: &AssetPath,
    horizon: ForecastHorizon,
    at: Timestamp,
    forecaster: &dyn Forecaster,
) -> Result<ForecastPoint, ForecastError> {
    let model = fit_parameter(tree, store, path, at, forecaster)?;
    let node = tree.resolve(path).map_err(|_| ForecastError::UnknownPath(path.to_string()))?;
    project(node, path, &model, horizon)
}

/// Days until the modelled value first reaches a level at or below `target_level`, `Some(0.0)`
/// when it already has, `None` when the trend never gets there.
///
/// For strict band boundaries the returned value is the crossing instant itself.
pub fn time_to_level(model: &TrendModel, node: &AssetNode, target_level: u8) -> Option<f64> {
    let (direction, bands) = (node.direction?, node.bands.as_ref()?);
    if !(1..=4).contains(&target_level) {
        return None;
    }
    let current = bands.level_for(direction, node.value_domain().clamp(model.level));
    if current.value() <= target_level {
        return Some(0.0);
    }
    let t = target_level as usize;
    let e = &bands.edges;
    let (level, trend) = (model.level, model.trend);
    let crossing = |boundary: f64| Some((boundary - level) / trend).filter(|d| d.is_finite() && *d >= 0.0);
    match direction {
        Direction::HigherIsBetter if trend < 0.0 => crossing(e[t - 1]),
        Direction::LowerIsBetter if trend > 0.0 => crossing(e[t - 1]),
        Direction::Banded if trend < 0.0 => crossing(e[t - 1]),
        Direction::Banded if trend > 0.0 => crossing(e[8 - t]),
        _ => None,
    }
}
