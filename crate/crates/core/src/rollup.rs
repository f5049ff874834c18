//! Upward health aggregation: parameters → area → floor → subsystem → building, for the current
//! state and each forecast horizon.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{AssetNode, AssetPath, AssetTree, NodeKind};
use crate::level::HealthLevel;

/// Tolerance applied before flooring a weighted mean, so that e.g. three thirds of level 4 do
/// not collapse to 3 through rounding error.
const FLOOR_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RollupError {
    #[error("nothing to aggregate")]
    EmptyChildren,
    #[error("weight for {0} must be finite and positive")]
    NonPositiveWeight(String),
    #[error("weights do not cover the children of {0}")]
    WeightsMismatch(String),
    #[error("user area {0} has no cil")]
    MissingCil(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RollupMethod {
    Critical,
    WeightedAverage,
}

/// Aggregation rule for one interior node.
#[derive(Debug, Clone, PartialEq)]
pub enum AggregationPolicy {
    /// Worst child wins.
    Critical,
    /// Weighted mean of child levels, floored toward worse health.
    WeightedAverage(BTreeMap<String, f64>),
}

/// Aggregates child levels. `Critical` takes the minimum; `WeightedAverage` takes
/// `floor(Σ wᵢ·Lᵢ / Σ wᵢ)`.
pub fn rollup(items: &[(HealthLevel, f64)], method: RollupMethod) -> Result<HealthLevel, RollupError> {
    if items.is_empty() {
        return Err(RollupError::EmptyChildren);
    }
    match method {
        RollupMethod::Critical => Ok(items.iter().map(|(l, _)| *l).min().expect("non-empty")),
        RollupMethod::WeightedAverage => {
            let mut total = 0.0;
            let mut acc = 0.0;
            for (i, (level, w)) in items.iter().enumerate() {
                if !(w.is_finite() && *w > 0.0) {
                    return Err(RollupError::NonPositiveWeight(format!("#{i}")));
                }
                total += w;
                acc += w * f64::from(level.value());
            }
            let mean = (acc / total + FLOOR_EPS).floor();
            Ok(HealthLevel::new(mean as u8).expect("weighted mean of levels stays in 1..=5"))
        }
    }
}

/// CIL-derived weights for the user areas of a floor: `(6 − cil) / Σ(6 − cilⱼ)`.
pub fn area_weights(floor: &AssetNode) -> Result<BTreeMap<String, f64>, RollupError> {
    let areas: Vec<&AssetNode> =
        floor.children.iter().filter(|c| c.kind == NodeKind::UserArea).collect();
    if areas.is_empty() {
        return Err(RollupError::EmptyChildren);
    }
    let mut raw = BTreeMap::new();
    for area in areas {
        let cil = area.cil.filter(|c| (1..=5).contains(c)).ok_or_else(|| RollupError::MissingCil(area.id.clone()))?;
        raw.insert(area.id.clone(), f64::from(6 - cil));
    }
    let total: f64 = raw.values().sum();
    Ok(raw.into_iter().map(|(k, v)| (k, v / total)).collect())
}

/// Configured policy for one layer of the hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicySpec {
    Critical,
    /// Weights from area CIL ranks (only meaningful for area → floor).
    CilWeighted,
    EqualWeighted,
    /// Explicit weights by child id.
    Weighted(BTreeMap<String, f64>),
}

/// Policy per aggregation layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStack {
    pub parameter_to_area: PolicySpec,
    pub area_to_floor: PolicySpec,
    pub floor_to_subsystem: PolicySpec,
    pub subsystem_to_building: PolicySpec,
}

impl Default for PolicyStack {
    fn default() -> Self {
        Self {
            parameter_to_area: PolicySpec::Critical,
            area_to_floor: PolicySpec::CilWeighted,
            floor_to_subsystem: PolicySpec::EqualWeighted,
            subsystem_to_building: PolicySpec::Critical,
        }
    }
}

impl PolicyStack {
    pub fn all_critical() -> Self {
        Self {
            parameter_to_area: PolicySpec::Critical,
            area_to_floor: PolicySpec::Critical,
            floor_to_subsystem: PolicySpec::Critical,
            subsystem_to_building: PolicySpec::Critical,
        }
    }

    /// Spec applying to `node`'s children. Any node whose children are parameters uses the
    /// parameter layer.
    pub fn spec_for(&self, node: &AssetNode) -> &PolicySpec {
        match node.kind {
            NodeKind::Building => &self.subsystem_to_building,
            NodeKind::Floor => &self.area_to_floor,
            NodeKind::Subsystem
                if node.children.iter().all(|c| c.kind == NodeKind::Parameter) =>
            {
                &self.parameter_to_area
            }
            NodeKind::Subsystem => &self.floor_to_subsystem,
            _ => &self.parameter_to_area,
        }
    }

    pub fn policy_for(&self, node: &AssetNode) -> Result<AggregationPolicy, RollupError> {
        resolve_policy(self.spec_for(node), node)
    }
}

pub fn resolve_policy(spec: &PolicySpec, node: &AssetNode) -> Result<AggregationPolicy, RollupError> {
    Ok(match spec {
        PolicySpec::Critical => AggregationPolicy::Critical,
        PolicySpec::CilWeighted => AggregationPolicy::WeightedAverage(area_weights(node)?),
        PolicySpec::EqualWeighted => AggregationPolicy::WeightedAverage(
            node.children.iter().map(|c| (c.id.clone(), 1.0)).collect(),
        ),
        PolicySpec::Weighted(weights) => {
            let covers = node.children.len() == weights.len()
                && node.children.iter().all(|c| weights.contains_key(&c.id));
            if !covers {
                return Err(RollupError::WeightsMismatch(node.id.clone()));
            }
            AggregationPolicy::WeightedAverage(weights.clone())
        }
    })
}

/// Applies `policy` to the children that have a level; `None` when every child is absent.
pub fn aggregate(
    children: &[(String, Option<HealthLevel>)],
    policy: &AggregationPolicy,
) -> Result<Option<HealthLevel>, RollupError> {
    let present: Vec<(&String, HealthLevel)> =
        children.iter().filter_map(|(id, l)| l.map(|l| (id, l))).collect();
    if present.is_empty() {
        return Ok(None);
    }
    let level = match policy {
        AggregationPolicy::Critical => {
            let items: Vec<_> = present.iter().map(|(_, l)| (*l, 1.0)).collect();
            rollup(&items, RollupMethod::Critical)?
        }
        AggregationPolicy::WeightedAverage(weights) => {
            let mut items = Vec::with_capacity(present.len());
            for (id, level) in &present {
                let w = *weights.get(*id).ok_or_else(|| RollupError::WeightsMismatch((*id).clone()))?;
                items.push((*level, w));
            }
            rollup(&items, RollupMethod::WeightedAverage)?
        }
    };
    Ok(Some(level))
}

/// Current, 3-month and 6-month levels of one node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelTriple {
    pub now: Option<HealthLevel>,
    pub at_m3: Option<HealthLevel>,
    pub at_m6: Option<HealthLevel>,
}

impl LevelTriple {
    pub fn uniform(level: HealthLevel) -> Self {
        Self { now: Some(level), at_m3: Some(level), at_m6: Some(level) }
    }
}

/// Integrated health of a node and its whole subtree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedStatus {
    pub id: String,
    pub path: AssetPath,
    pub kind: NodeKind,
    pub display_name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cil: Option<u8>,
    pub now: Option<HealthLevel>,
    pub at_m3: Option<HealthLevel>,
    pub at_m6: Option<HealthLevel>,
    pub children: Vec<IntegratedStatus>,
}

impl IntegratedStatus {
    pub fn levels(&self) -> LevelTriple {
        LevelTriple { now: self.now, at_m3: self.at_m3, at_m6: self.at_m6 }
    }

    pub fn find(&self, path: &AssetPath) -> Option<&IntegratedStatus> {
        if &self.path == path {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(path))
    }
}

/// Bottom-up evaluation of the whole tree from per-parameter leaf levels. Parameters missing
/// from `leaves` count as having no data.
pub fn building_status(
    tree: &AssetTree,
    leaves: &HashMap<AssetPath, LevelTriple>,
    policies: &PolicyStack,
) -> Result<IntegratedStatus, RollupError> {
    fold(tree.root(), tree.root_path(), leaves, policies)
}

fn fold(
    node: &AssetNode,
    path: AssetPath,
    leaves: &HashMap<AssetPath, LevelTriple>,
    policies: &PolicyStack,
) -> Result<IntegratedStatus, RollupError> {
    let mut children = Vec::with_capacity(node.children.len());
    for child in &node.children {
        children.push(fold(child, path.join(&child.id), leaves, policies)?);
    }

    let levels = if node.kind == NodeKind::Parameter {
        leaves.get(&path).copied().unwrap_or_default()
    } else if children.is_empty() {
        LevelTriple::default()
    } else {
        let policy = policies.policy_for(node)?;
        let channel = |pick: fn(&IntegratedStatus) -> Option<HealthLevel>| {
            let items: Vec<_> = children.iter().map(|c| (c.id.clone(), pick(c))).collect();
            aggregate(&items, &policy)
        };
        LevelTriple {
            now: channel(|c| c.now)?,
            at_m3: channel(|c| c.at_m3)?,
            at_m6: channel(|c| c.at_m6)?,
        }
    };

    Ok(IntegratedStatus {
        id: node.id.clone(),
        path,
        kind: node.kind,
        display_name: node.display_name.clone(),
        cil: node.cil,
        now: levels.now,
        at_m3: levels.at_m3,
        at_m6: levels.at_m6,
        children,
    })
}
