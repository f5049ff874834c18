use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use twin_core::asset::{build_tree, demo_config, AssetNode, Direction, NodeKind, ThresholdBands, ValueDomain};
use twin_core::forecast::{forecast_value, time_to_level, ForecastHorizon, TrendMethod, TrendModel};
use twin_core::health::classify_level;
use twin_core::level::HealthLevel;
use twin_core::rollup::{rollup, RollupMethod};
use twin_core::telemetry::{ParameterReading, TelemetryStore};

fn node(direction: Direction, edges: Vec<f64>) -> AssetNode {
    AssetNode {
        id: "p".into(),
        kind: NodeKind::Parameter,
        display_name: "p".into(),
        cil: None,
        direction: Some(direction),
        bands: Some(ThresholdBands::new(edges)),
        unit: Some("u".into()),
        domain: Some(ValueDomain::new(-1000.0, 1000.0)),
        plan: None,
        children: vec![],
    }
}

fn ascending(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0f64..50.0, n).prop_map(|gaps| {
        let mut x = -500.0;
        gaps.into_iter()
            .map(|g| {
                x += g;
                x
            })
            .collect()
    })
}

fn model(level: f64, trend: f64) -> TrendModel {
    TrendModel {
        method: TrendMethod::HoltLinear,
        level,
        trend,
        alpha: 0.3,
        beta: 0.1,
        n_points: 30,
        fitted_at: None,
        residual_sigma: 0.0,
    }
}

proptest! {
    #[test]
    fn higher_is_better_is_monotone_and_lower_inclusive(edges in ascending(4), a in -999.0f64..999.0, b in -999.0f64..999.0) {
        let n = node(Direction::HigherIsBetter, edges.clone());
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(classify_level(&n, lo).unwrap() <= classify_level(&n, hi).unwrap());
        for (k, edge) in edges.iter().enumerate() {
            prop_assert_eq!(classify_level(&n, *edge).unwrap().value() as usize, k + 2);
        }
    }

    #[test]
    fn lower_is_better_mirrors(edges in ascending(4), a in -999.0f64..999.0, b in -999.0f64..999.0) {
        let desc: Vec<f64> = edges.iter().rev().copied().collect();
        let n = node(Direction::LowerIsBetter, desc.clone());
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(classify_level(&n, lo).unwrap() >= classify_level(&n, hi).unwrap());
        // level k starts (inclusive) at the k-th listed edge
        for (k, edge) in desc.iter().enumerate() {
            prop_assert_eq!(classify_level(&n, *edge).unwrap().value() as usize, k + 1);
        }
    }

    #[test]
    fn banded_is_unimodal(edges in ascending(8), xs in prop::collection::vec(-999.0f64..999.0, 2..30)) {
        let n = node(Direction::Banded, edges.clone());
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let levels: Vec<HealthLevel> = xs.iter().map(|&x| classify_level(&n, x).unwrap()).collect();
        let peak = levels.iter().enumerate().max_by_key(|(i, l)| (**l, std::cmp::Reverse(*i))).unwrap().0;
        prop_assert!(levels[..=peak].windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(levels[peak..].windows(2).all(|w| w[0] >= w[1]));
        let mid = 0.5 * (edges[3] + edges[4]);
        prop_assert_eq!(classify_level(&n, mid).unwrap().value(), 5);
    }

    #[test]
    fn out_of_domain_is_rejected(edges in ascending(4), x in 1000.5f64..1e9) {
        let n = node(Direction::HigherIsBetter, edges);
        prop_assert!(classify_level(&n, x).is_err());
        prop_assert!(classify_level(&n, -x).is_err());
        prop_assert!(classify_level(&n, f64::NAN).is_err());
    }

    #[test]
    fn uniform_children_roll_up_to_their_level(level in 1u8..=5, weights in prop::collection::vec(0.01f64..10.0, 1..12)) {
        let l = HealthLevel::new(level).unwrap();
        let items: Vec<_> = weights.iter().map(|&w| (l, w)).collect();
        prop_assert_eq!(rollup(&items, RollupMethod::WeightedAverage).unwrap(), l);
        prop_assert_eq!(rollup(&items, RollupMethod::Critical).unwrap(), l);
    }

    #[test]
    fn critical_never_exceeds_weighted(levels in prop::collection::vec(1u8..=5, 1..10)) {
        let items: Vec<_> = levels.iter().map(|&v| (HealthLevel::new(v).unwrap(), 1.0)).collect();
        prop_assert!(rollup(&items, RollupMethod::Critical).unwrap() <= rollup(&items, RollupMethod::WeightedAverage).unwrap());
    }

    #[test]
    fn time_to_level_lands_on_the_boundary(edges in ascending(4), offset in 1.0f64..300.0, slope in 0.01f64..5.0, target in 1u8..=4) {
        let n = node(Direction::HigherIsBetter, edges.clone());
        let start = edges[3] + offset;
        let m = model(start, -slope);
        let days = time_to_level(&m, &n, target).unwrap();
        let value_then = start - slope * days;
        prop_assert!((value_then - edges[target as usize - 1]).abs() < 1e-9);
        prop_assert!(classify_level(&n, value_then - 1e-6).unwrap().value() <= target);
        prop_assert!(classify_level(&n, start - slope * (days - 1e-3).max(0.0)).unwrap().value() > target);
    }

    #[test]
    fn forecast_value_is_linear_and_clamped(level in -2000.0f64..2000.0, trend in -20.0f64..20.0) {
        let dom = ValueDomain::new(-1000.0, 1000.0);
        let m = model(level, trend);
        for h in ForecastHorizon::ALL {
            let v = forecast_value(&m, h, &dom);
            prop_assert_eq!(v, (level + trend * f64::from(h.days())).clamp(-1000.0, 1000.0));
        }
    }

    #[test]
    fn latest_at_sees_last_write(values in prop::collection::vec((0i64..500, 0.0f64..5000.0), 1..200), probe in 0i64..600) {
        let tree = Arc::new(build_tree(demo_config()).unwrap());
        let path: twin_core::AssetPath = "library/lighting/floor-3/archive/illuminance".parse().unwrap();
        let mut store = TelemetryStore::new(tree);
        let base = Utc.with_ymd_and_hms(2025, 6, 1, 0, 0, 0).unwrap();
        let mut last = std::collections::BTreeMap::new();
        for (m, v) in &values {
            let ts = base + Duration::minutes(*m);
            store.ingest(&ParameterReading { ts, path: path.clone(), value: *v, unit: "lux".into() }).unwrap();
            last.insert(ts, *v);
        }
        let at = base + Duration::minutes(probe);
        let expected = last.range(..=at).next_back().map(|(t, v)| (*t, *v));
        let got = store.latest_at(&path, at).unwrap().map(|r| (r.ts, r.value));
        prop_assert_eq!(got, expected);
        prop_assert_eq!(store.reading_count(), last.len());
        prop_assert_eq!(store.newest_ts(), last.keys().next_back().copied().map(|t: DateTime<Utc>| t));
    }
}
