//! Deterministic synthetic library: lumen depreciation, daylight, weather context and injected
//! faults, emitted in the telemetry log format.
//!
//! Each parameter path owns an independent splitmix64 stream seeded from
//! `seed ^ fnv1a64(path)`; the context series uses the stream named `"context"`. Gaussian noise
//! uses the cosine branch of Box–Muller on two consecutive uniforms, so every tick consumes
//! exactly two draws per stream whatever the noise level.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{Duration, FixedOffset, SecondsFormat, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{AssetNode, AssetPath, AssetTree, Direction, NodeKind};
use crate::eventlog::LogEvent;
use crate::telemetry::{ContextRecord, ParameterReading};
use crate::timefmt::{self, Timestamp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("fault at {0} lies outside the scenario span")]
    OutOfSpan(String),
}

/// splitmix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Stream for a named series under a scenario seed.
    pub fn for_stream(seed: u64, name: &str) -> Self {
        Self::new(seed ^ fnv1a64(name.as_bytes()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller (cosine branch).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Site location and a simple clear-sky daylight model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiteModel {
    pub latitude: f64,
    pub longitude: f64,
    pub utc_offset_hours: i32,
    /// Outdoor illuminance at local noon under a clear sky.
    pub peak_lux: f64,
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    pub cloud_mean: f64,
    /// Per-tick standard deviation of the cloud-cover random walk.
    pub cloud_volatility: f64,
}

impl Default for SiteModel {
    fn default() -> Self {
        Self {
            latitude: 60.61,
            longitude: 15.63,
            utc_offset_hours: 1,
            peak_lux: 10_000.0,
            sunrise_hour: 6.0,
            sunset_hour: 18.0,
            cloud_mean: 0.5,
            cloud_volatility: 0.05,
        }
    }
}

impl SiteModel {
    pub fn offset(&self) -> FixedOffset {
        FixedOffset::east_opt(self.utc_offset_hours * 3600).expect("offset validated")
    }

    /// Local hour of day as a fraction.
    pub fn local_hour(&self, ts: Timestamp) -> f64 {
        let local = ts.with_timezone(&self.offset());
        f64::from(local.hour()) + f64::from(local.minute()) / 60.0 + f64::from(local.second()) / 3600.0
    }
}

/// Outdoor daylight contribution in lux: a half-sine between sunrise and sunset peaking at
/// local noon, attenuated by `1 − 0.75·cloud_cover`.
pub fn daylight(site: &SiteModel, ts: Timestamp, cloud_cover: f64) -> f64 {
    let hour = site.local_hour(ts);
    if hour <= site.sunrise_hour || hour >= site.sunset_hour {
        return 0.0;
    }
    let phase = PI * (hour - site.sunrise_hour) / (site.sunset_hour - site.sunrise_hour);
    (site.peak_lux * phase.sin()).max(0.0) * (1.0 - 0.75 * cloud_cover)
}

/// Per-parameter generating process:
/// `(initial + drift·h)·exp(−λ·h) + daylight_gain·daylight + σ·N(0,1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    pub initial: f64,
    /// λ per hour.
    #[serde(default)]
    pub decay_per_hour: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub drift_per_hour: f64,
    #[serde(default)]
    pub daylight_gain: f64,
}

impl ProcessParams {
    pub fn constant(initial: f64) -> Self {
        Self { initial, decay_per_hour: 0.0, noise_sigma: 0.0, drift_per_hour: 0.0, daylight_gain: 0.0 }
    }

    /// Noise-free, daylight-free value after `hours`.
    pub fn base(&self, hours: f64) -> f64 {
        (self.initial + self.drift_per_hour * hours) * (-self.decay_per_hour * hours).exp()
    }
}

/// λ such that output falls to `fraction` of initial after `hours` (e.g. L70 at 50,000 h).
pub fn decay_for(fraction: f64, hours: f64) -> f64 {
    (1.0 / fraction).ln() / hours
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FaultKind {
    /// Output multiplied by `residual`.
    LampFailure {
        #[serde(default = "default_residual")]
        residual: f64,
    },
    /// Temperature step of `delta`.
    DriverOvertemp { delta: f64 },
    /// Value frozen at the last pre-fault reading.
    Stuck,
}

fn default_residual() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub path: AssetPath,
    #[serde(with = "timefmt")]
    pub at: Timestamp,
    pub kind: FaultKind,
}

fn default_cadence() -> u32 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Asset config file, relative to the scenario file. The demo library when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assets: Option<String>,
    pub seed: u64,
    #[serde(with = "timefmt")]
    pub start: Timestamp,
    pub span_days: u32,
    #[serde(default = "default_cadence")]
    pub cadence_minutes: u32,
    #[serde(default)]
    pub site: SiteModel,
    /// Processes keyed by full parameter path or by parameter id; full paths win.
    #[serde(default)]
    pub processes: BTreeMap<String, ProcessParams>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
}

impl Scenario {
    pub fn end(&self) -> Timestamp {
        self.start + Duration::days(i64::from(self.span_days))
    }

    pub fn check(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidScenario(m.to_string()));
        if self.span_days < 1 {
            return bad("span_days must be at least 1");
        }
        if self.cadence_minutes == 0 {
            return bad("cadence_minutes must be positive");
        }
        let s = &self.site;
        if !(-90.0..=90.0).contains(&s.latitude) || !(-180.0..=180.0).contains(&s.longitude) {
            return bad("site coordinates out of range");
        }
        if !(-12..=14).contains(&s.utc_offset_hours) {
            return bad("utc offset out of range");
        }
        if !(0.0 <= s.sunrise_hour && s.sunrise_hour < s.sunset_hour && s.sunset_hour <= 24.0) {
            return bad("sunrise must precede sunset within the day");
        }
        if !(0.0..=1.0).contains(&s.cloud_mean) || s.cloud_volatility < 0.0 || s.peak_lux < 0.0 {
            return bad("cloud or daylight parameters out of range");
        }
        for (key, p) in &self.processes {
            let finite = [p.initial, p.decay_per_hour, p.noise_sigma, p.drift_per_hour, p.daylight_gain]
                .iter()
                .all(|x| x.is_finite());
            if !finite || p.decay_per_hour < 0.0 || p.noise_sigma < 0.0 {
                return Err(SimError::InvalidScenario(format!("process {key}: need finite values, λ >= 0, σ >= 0")));
            }
        }
        for f in &self.faults {
            if f.at < self.start || f.at >= self.end() {
                return Err(SimError::OutOfSpan(timefmt::format(&f.at)));
            }
            if let FaultKind::LampFailure { residual } = f.kind {
                if !(0.0..=1.0).contains(&residual) {
                    return bad("lamp failure residual must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }
}

/// Returns `scenario` with `fault` added.
pub fn inject_fault(scenario: &Scenario, fault: FaultSpec) -> Result<Scenario, SimError> {
    if fault.at < scenario.start || fault.at >= scenario.end() {
        return Err(SimError::OutOfSpan(timefmt::format(&fault.at)));
    }
    let mut next = scenario.clone();
    next.faults.push(fault);
    Ok(next)
}

/// A value comfortably inside the best band, used for parameters without a configured process.
pub fn healthy_value(node: &AssetNode) -> f64 {
    let (Some(direction), Some(bands)) = (node.direction, node.bands.as_ref()) else {
        return 0.0;
    };
    let e = &bands.edges;
    let v = match direction {
        Direction::HigherIsBetter => e[3] + 0.5 * (e[3] - e[2]),
        Direction::LowerIsBetter => e[3] - 0.5 * (e[2] - e[3]),
        Direction::Banded => 0.5 * (e[3] + e[4]),
    };
    node.value_domain().clamp(v)
}

struct Channel<'a> {
    path: AssetPath,
    node: &'a AssetNode,
    process: ProcessParams,
    rng: SplitMix64,
    faults: Vec<&'a FaultSpec>,
    last: Option<f64>,
    stuck_at: Option<f64>,
}

/// Generates the full telemetry stream: per tick, one context record followed by one reading per
/// parameter in tree order.
pub fn generate(scenario: &Scenario, tree: &AssetTree) -> Result<Vec<LogEvent>, SimError> {
    scenario.check()?;
    for f in &scenario.faults {
        tree.resolve_kind(&f.path, NodeKind::Parameter)
            .map_err(|_| SimError::InvalidScenario(format!("fault path {} is not a parameter", f.path)))?;
    }

    let mut channels: Vec<Channel> = tree
        .parameters()
        .into_iter()
        .map(|(path, node)| {
            let key = path.to_string();
            let process = scenario
                .processes
                .get(&key)
                .or_else(|| scenario.processes.get(&node.id))
                .cloned()
                .unwrap_or_else(|| ProcessParams::constant(healthy_value(node)));
            let mut faults: Vec<&FaultSpec> = scenario.faults.iter().filter(|f| f.path == path).collect();
            faults.sort_by_key(|f| f.at);
            Channel { rng: SplitMix64::for_stream(scenario.seed, &key), path, node, process, faults, last: None, stuck_at: None }
        })
        .collect();

    let site = &scenario.site;
    let mut ctx_rng = SplitMix64::for_stream(scenario.seed, "context");
    let mut cloud = site.cloud_mean;
    let cadence = Duration::minutes(i64::from(scenario.cadence_minutes));
    let end = scenario.end();

    let mut out = Vec::new();
    let mut ts = scenario.start;
    while ts < end {
        let hours = (ts - scenario.start).num_seconds() as f64 / 3600.0;
        cloud = (cloud + 0.1 * (site.cloud_mean - cloud) + site.cloud_volatility * ctx_rng.next_gaussian()).clamp(0.0, 1.0);
        let outdoor = daylight(site, ts, cloud);
        out.push(LogEvent::Context(ContextRecord {
            ts,
            latitude: site.latitude,
            longitude: site.longitude,
            outdoor_illuminance: outdoor,
            cloud_cover: cloud,
            local_time: ts.with_timezone(&site.offset()).to_rfc3339_opts(SecondsFormat::Secs, false),
        }));

        for ch in &mut channels {
            let noise = ch.rng.next_gaussian();
            let p = &ch.process;
            let mut value = p.base(hours) + p.daylight_gain * outdoor + p.noise_sigma * noise;
            for fault in ch.faults.iter().filter(|f| f.at <= ts) {
                match fault.kind {
                    FaultKind::LampFailure { residual } => value *= residual,
                    FaultKind::DriverOvertemp { delta } => value += delta,
                    FaultKind::Stuck => {
                        if ch.stuck_at.is_none() {
                            ch.stuck_at = Some(ch.last.unwrap_or(value));
                        }
                    }
                }
            }
            let value = match ch.stuck_at {
                Some(v) => v,
                None => ch.node.value_domain().clamp(value),
            };
            ch.last = Some(value);
            out.push(LogEvent::Reading(ParameterReading {
                ts,
                path: ch.path.clone(),
                value,
                unit: ch.node.unit.clone().unwrap_or_default(),
            }));
        }
        ts += cadence;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asset::{build_tree, AssetConfigDocument};
    use chrono::{TimeZone, Utc};

    fn one_param_tree() -> AssetTree {
        let doc: AssetConfigDocument = serde_json::from_str(
            r#"{"building":{"id":"lib","kind":"Building","display_name":"Lib","children":[
                {"id":"lighting","kind":"Subsystem","display_name":"Lighting","children":[
                {"id":"f1","kind":"Floor","display_name":"F1","children":[
                {"id":"a1","kind":"UserArea","display_name":"A1","cil":2,"children":[
                {"id":"illuminance","kind":"Parameter","display_name":"Lux","direction":"HigherIsBetter",
                 "bands":{"edges":[100,300,450,500]},"unit":"lux","domain":{"min":0,"max":5000}}]}]}]}]},
              "area_parameters":["illuminance"]}"#,
        )
        .unwrap();
        build_tree(doc).unwrap()
    }

    fn scenario(span_days: u32) -> Scenario {
        Scenario {
            assets: None,
            seed: 7,
            start: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
            span_days,
            cadence_minutes: 60,
            site: SiteModel::default(),
            processes: BTreeMap::new(),
            faults: vec![],
        }
    }

    fn lux_values(events: &[LogEvent]) -> Vec<(Timestamp, f64)> {
        events
            .iter()
            .filter_map(|e| match e {
                LogEvent::Reading(r) => Some((r.ts, r.value)),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn splitmix_reference_values() {
        // published splitmix64 outputs for seed 1234567
        let mut r = SplitMix64::new(1234567);
        assert_eq!(r.next_u64(), 6457827717110365317);
        assert_eq!(r.next_u64(), 3203168211198807973);
        let mut u = SplitMix64::new(1);
        for _ in 0..1000 {
            let x = u.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn gaussian_moments() {
        let mut r = SplitMix64::new(99);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| r.next_gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn l70_decay_constant() {
        let lambda = decay_for(0.7, 50_000.0);
        assert!((lambda - 7.1335e-6).abs() < 1e-9, "{lambda}");
        let p = ProcessParams { decay_per_hour: lambda, ..ProcessParams::constant(500.0) };
        assert!((p.base(50_000.0) - 350.0).abs() < 1e-9);

        let tree = one_param_tree();
        let mut s = scenario(2100);
        s.cadence_minutes = 60 * 1000;
        s.processes.insert("illuminance".into(), p.clone());
        let values = lux_values(&generate(&s, &tree).unwrap());
        let (_, at_50k) = values.iter().find(|(ts, _)| (*ts - s.start).num_hours() == 50_000).unwrap();
        assert!((at_50k - 350.0).abs() < 1e-9);
    }

    #[test]
    fn zero_noise_matches_closed_form() {
        let tree = one_param_tree();
        let mut s = scenario(30);
        let p = ProcessParams { decay_per_hour: 1e-4, ..ProcessParams::constant(520.0) };
        s.processes.insert("illuminance".into(), p);
        for (ts, v) in lux_values(&generate(&s, &tree).unwrap()) {
            let h = (ts - s.start).num_seconds() as f64 / 3600.0;
            assert!((v - 520.0 * (-1e-4 * h).exp()).abs() < 1e-9);
        }
        let mut flat = scenario(5);
        flat.processes.insert("illuminance".into(), ProcessParams::constant(480.0));
        assert!(lux_values(&generate(&flat, &tree).unwrap()).iter().all(|(_, v)| *v == 480.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let tree = build_tree(crate::asset::demo_config()).unwrap();
        let mut s = scenario(2);
        s.processes.insert("illuminance".into(), ProcessParams { noise_sigma: 5.0, ..ProcessParams::constant(520.0) });
        let a = generate(&s, &tree).unwrap();
        let b = generate(&s, &tree).unwrap();
        let lines = |ev: &[LogEvent]| ev.iter().map(LogEvent::to_line).collect::<Vec<_>>().join("\n");
        assert_eq!(lines(&a), lines(&b));
        s.seed = 8;
        assert_ne!(lines(&a), lines(&generate(&s, &tree).unwrap()));
    }

    #[test]
    fn lamp_failure_drops_output() {
        let tree = one_param_tree();
        let path: AssetPath = "lib/lighting/f1/a1/illuminance".parse().unwrap();
        let mut s = scenario(30);
        s.processes.insert("illuminance".into(), ProcessParams { noise_sigma: 3.0, ..ProcessParams::constant(520.0) });
        let at = s.start + Duration::days(10);
        let faulty = inject_fault(&s, FaultSpec { path, at, kind: FaultKind::LampFailure { residual: 0.05 } }).unwrap();
        let clean = lux_values(&generate(&s, &tree).unwrap());
        let broken = lux_values(&generate(&faulty, &tree).unwrap());
        let node = tree.resolve(&"lib/lighting/f1/a1/illuminance".parse().unwrap()).unwrap();
        for (i, ((ts, c), (_, b))) in clean.iter().zip(&broken).enumerate() {
            if *ts < at {
                assert_eq!(c, b);
            } else {
                let lc = crate::health::classify_level(node, *c).unwrap();
                let lb = crate::health::classify_level(node, *b).unwrap();
                assert!(lb <= lc);
                if *ts == at {
                    let prev = broken[i - 1].1;
                    assert!((prev - b) / prev > 0.9);
                }
            }
        }
    }

    #[test]
    fn stuck_freezes_value() {
        let tree = build_tree(crate::asset::demo_config()).unwrap();
        let path: AssetPath = "library/lighting/floor-1/entrance/cct".parse().unwrap();
        let mut s = scenario(3);
        s.processes.insert("cct".into(), ProcessParams { noise_sigma: 50.0, ..ProcessParams::constant(4000.0) });
        let at = s.start + Duration::days(1);
        let s = inject_fault(&s, FaultSpec { path: path.clone(), at, kind: FaultKind::Stuck }).unwrap();
        let cct: Vec<(Timestamp, f64)> = generate(&s, &tree)
            .unwrap()
            .into_iter()
            .filter_map(|e| match e {
                LogEvent::Reading(r) if r.path == path => Some((r.ts, r.value)),
                _ => None,
            })
            .collect();
        let last_before = cct.iter().filter(|(t, _)| *t < at).last().unwrap().1;
        assert!(cct.iter().filter(|(t, _)| *t >= at).all(|(_, v)| *v == last_before));
    }

    #[test]
    fn fault_outside_span() {
        let s = scenario(30);
        let fault = FaultSpec {
            path: "lib/lighting/f1/a1/illuminance".parse().unwrap(),
            at: s.start + Duration::days(400),
            kind: FaultKind::LampFailure { residual: 0.05 },
        };
        assert!(matches!(inject_fault(&s, fault), Err(SimError::OutOfSpan(_))));
    }

    #[test]
    fn daylight_curve() {
        let site = SiteModel { utc_offset_hours: 0, ..SiteModel::default() };
        let day = |h: u32| Utc.with_ymd_and_hms(2025, 6, 1, h, 0, 0).unwrap();
        assert_eq!(daylight(&site, day(0), 0.0), 0.0);
        assert!((daylight(&site, day(12), 0.0) - 10_000.0).abs() < 1e-9);
        assert!((daylight(&site, day(12), 1.0) - 2_500.0).abs() < 1e-9);
        assert_eq!(daylight(&site, day(20), 0.0), 0.0);
    }

    #[test]
    fn invalid_scenarios() {
        let mut s = scenario(0);
        assert!(matches!(s.check(), Err(SimError::InvalidScenario(_))));
        s.span_days = 3;
        s.processes.insert("x".into(), ProcessParams { noise_sigma: -1.0, ..ProcessParams::constant(1.0) });
        assert!(s.check().is_err());
    }

    #[test]
    fn context_records_are_valid() {
        let tree = one_param_tree();
        for e in generate(&scenario(2), &tree).unwrap() {
            if let LogEvent::Context(c) = e {
                c.check().unwrap();
                assert!(c.local_time.ends_with("+01:00"));
            }
        }
    }
}
