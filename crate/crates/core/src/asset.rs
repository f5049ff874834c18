//! Hierarchical asset model: Building → Subsystem → Floor → UserArea → Parameter.
//!
//! Every other module addresses assets by [`AssetPath`]. A tree is only obtainable through
//! [`build_tree`], which runs the full validation pass, so holders of an [`AssetTree`] can rely on
//! the structural invariants (unique ids per parent, strict kind descent, CIL on areas, well-formed
//! threshold bands).

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::level::HealthLevel;

/// Parameter ids of the default ten-parameter lighting set, in display order.
pub const DEFAULT_AREA_PARAMETERS: [&str; 10] = [
    "illuminance",
    "uniformity",
    "cct",
    "cri",
    "ugr",
    "flicker",
    "melanopic-edi",
    "power",
    "burning-hours",
    "driver-temp",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Building,
    Subsystem,
    Floor,
    UserArea,
    Parameter,
}

impl NodeKind {
    fn allowed_children(self) -> &'static [NodeKind] {
        match self {
            NodeKind::Building => &[NodeKind::Subsystem],
            // Non-lighting subsystems carry their synthetic health parameter directly.
            NodeKind::Subsystem => &[NodeKind::Floor, NodeKind::Parameter],
            NodeKind::Floor => &[NodeKind::UserArea],
            NodeKind::UserArea => &[NodeKind::Parameter],
            NodeKind::Parameter => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
    /// An optimum band: both too-low and too-high values degrade.
    Banded,
}

/// Boundary values between health levels.
///
/// Edges are always listed from the level-1 boundary toward the level-5 boundary:
///
/// * `HigherIsBetter`: four strictly ascending edges `b1<b2<b3<b4`; `v<b1` is level 1,
///   `[b1,b2)` level 2, ..., `v>=b4` level 5.
/// * `LowerIsBetter`: four strictly descending edges `b1>b2>b3>b4`; `v>=b1` is level 1,
///   `[b2,b1)` level 2, ..., `v<b4` level 5.
/// * `Banded`: eight strictly ascending edges, the lower limb `l1<l2<l3<l4` followed by the
///   mirrored upper limb `u4<u3<u2<u1`; `[l4,u4)` is level 5.
///
/// Every interval is lower-inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBands {
    pub edges: Vec<f64>,
}

impl ThresholdBands {
    pub fn new(edges: Vec<f64>) -> Self {
        Self { edges }
    }

    pub fn expected_len(direction: Direction) -> usize {
        match direction {
            Direction::Banded => 8,
            _ => 4,
        }
    }

    /// Checks edge count, finiteness and strict ordering for `direction`.
    pub fn is_well_formed(&self, direction: Direction) -> bool {
        if self.edges.len() != Self::expected_len(direction)
            || self.edges.iter().any(|e| !e.is_finite())
        {
            return false;
        }
        match direction {
            Direction::HigherIsBetter | Direction::Banded => {
                self.edges.windows(2).all(|w| w[0] < w[1])
            }
            Direction::LowerIsBetter => self.edges.windows(2).all(|w| w[0] > w[1]),
        }
    }

    /// Level for `value`. Assumes the bands are well formed for `direction`.
    pub fn level_for(&self, direction: Direction, value: f64) -> HealthLevel {
        let e = &self.edges;
        let raw = match direction {
            Direction::HigherIsBetter => 1 + e.iter().filter(|&&b| value >= b).count(),
            Direction::LowerIsBetter => 1 + e.iter().filter(|&&b| value < b).count(),
            Direction::Banded => {
                let below = 1 + e[..4].iter().filter(|&&b| value >= b).count();
                let above = 1 + e[4..].iter().filter(|&&b| value < b).count();
                below.min(above)
            }
        };
        HealthLevel::new(raw as u8).expect("band count bounded to 1..=5")
    }
}

/// Valid value range of a parameter. Missing bounds are unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ValueDomain {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl ValueDomain {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min: Some(min), max: Some(max) }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.min.map_or(true, |m| value >= m) && self.max.map_or(true, |m| value <= m)
    }

    pub fn clamp(&self, value: f64) -> f64 {
        let v = self.min.map_or(value, |m| value.max(m));
        self.max.map_or(v, |m| v.min(m))
    }
}

/// Cosmetic rectangle for the schematic floor plan, in floor-relative units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanRect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetNode {
    pub id: String,
    pub kind: NodeKind,
    pub display_name: String,
    /// Criticality rank of a user area, 1 = most critical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cil: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<ThresholdBands>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<ValueDomain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanRect>,
    #[serde(default)]
    pub children: Vec<AssetNode>,
}

impl AssetNode {
    pub fn child(&self, id: &str) -> Option<&AssetNode> {
        self.children.iter().find(|c| c.id == id)
    }

    pub fn value_domain(&self) -> ValueDomain {
        self.domain.unwrap_or_default()
    }
}

/// Top-level asset configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetConfigDocument {
    pub building: AssetNode,
    /// Parameter ids every user area must carry. Defaults to the ten-parameter lighting set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_parameters: Option<Vec<String>>,
}

impl AssetConfigDocument {
    pub fn from_json(text: &str) -> Result<Self, AssetError> {
        serde_json::from_str(text).map_err(|e| AssetError::Parse(e.to_string()))
    }

    fn parameter_set(&self) -> Vec<String> {
        self.area_parameters.clone().unwrap_or_else(|| {
            DEFAULT_AREA_PARAMETERS.iter().map(|s| s.to_string()).collect()
        })
    }
}

/// Slash-joined route from the building root to a node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AssetPath(Vec<String>);

impl AssetPath {
    pub fn new(segments: Vec<String>) -> Self {
        Self(segments)
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn leaf(&self) -> &str {
        self.0.last().map(String::as_str).unwrap_or("")
    }

    pub fn join(&self, id: &str) -> AssetPath {
        let mut segments = self.0.clone();
        segments.push(id.to_string());
        AssetPath(segments)
    }

    pub fn parent(&self) -> Option<AssetPath> {
        (self.0.len() > 1).then(|| AssetPath(self.0[..self.0.len() - 1].to_vec()))
    }

    /// Every prefix of this path, shortest first, including the path itself.
    pub fn prefixes(&self) -> impl Iterator<Item = AssetPath> + '_ {
        (1..=self.0.len()).map(|n| AssetPath(self.0[..n].to_vec()))
    }
}

impl fmt::Display for AssetPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("/"))
    }
}

impl FromStr for AssetPath {
    type Err = AssetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let segments: Vec<String> = s.trim_matches('/').split('/').map(str::to_string).collect();
        if segments.iter().any(|seg| seg.is_empty()) {
            return Err(AssetError::InvalidPath(s.to_string()));
        }
        Ok(AssetPath(segments))
    }
}

impl Serialize for AssetPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AssetPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssetError {
    #[error("duplicate id at {0}")]
    DuplicateId(String),
    #[error("kind order violation at {0}")]
    KindOrderViolation(String),
    #[error("user area {0} has no cil in 1..=5")]
    MissingCil(String),
    #[error("threshold bands gap or overlap at {0}")]
    BandGapOrOverlap(String),
    #[error("parameter {0} is missing direction, unit or bands")]
    IncompleteParameter(String),
    #[error("user area {0} does not carry exactly the configured parameter set")]
    ParameterSetMismatch(String),
    #[error("path not found: {0}")]
    PathNotFound(String),
    #[error("invalid path: {0:?}")]
    InvalidPath(String),
    #[error("invalid asset config: {0}")]
    Parse(String),
}

/// Result of a validation pass. Empty iff the document satisfies every tree invariant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<AssetError>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Validated, immutable asset hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetTree {
    root: AssetNode,
    area_parameters: Vec<String>,
}

/// Builds and validates the tree, returning the first violation found.
pub fn build_tree(config: AssetConfigDocument) -> Result<AssetTree, AssetError> {
    let report = validate(&config);
    if let Some(first) = report.violations.into_iter().next() {
        return Err(first);
    }
    let area_parameters = config.parameter_set();
    Ok(AssetTree { root: config.building, area_parameters })
}

/// Checks every structural invariant and lists each violation with its path.
pub fn validate(config: &AssetConfigDocument) -> ValidationReport {
    let mut report = ValidationReport::default();
    let root = &config.building;
    if root.kind != NodeKind::Building {
        report.violations.push(AssetError::KindOrderViolation(root.id.clone()));
    }
    let params = config.parameter_set();
    validate_node(root, &AssetPath(vec![root.id.clone()]), &params, &mut report);
    report
}

fn validate_node(
    node: &AssetNode,
    path: &AssetPath,
    area_parameters: &[String],
    report: &mut ValidationReport,
) {
    let here = path.to_string();
    if node.id.is_empty() || node.id.contains('/') {
        report.violations.push(AssetError::InvalidPath(here.clone()));
    }

    match node.kind {
        NodeKind::UserArea => {
            if !node.cil.is_some_and(|c| (1..=5).contains(&c)) {
                report.violations.push(AssetError::MissingCil(here.clone()));
            }
            let mut ids: Vec<&str> = node
                .children
                .iter()
                .filter(|c| c.kind == NodeKind::Parameter)
                .map(|c| c.id.as_str())
                .collect();
            ids.sort_unstable();
            let mut expected: Vec<&str> = area_parameters.iter().map(String::as_str).collect();
            expected.sort_unstable();
            if ids != expected {
                report.violations.push(AssetError::ParameterSetMismatch(here.clone()));
            }
        }
        NodeKind::Parameter => match (node.direction, &node.bands, &node.unit) {
            (Some(direction), Some(bands), Some(_)) => {
                let domain = node.value_domain();
                let inside = bands.edges.iter().all(|&e| domain.contains(e));
                if !bands.is_well_formed(direction) || !inside {
                    report.violations.push(AssetError::BandGapOrOverlap(here.clone()));
                }
            }
            _ => report.violations.push(AssetError::IncompleteParameter(here.clone())),
        },
        _ => {}
    }

    let mut seen = HashSet::new();
    for child in &node.children {
        let child_path = path.join(&child.id);
        if !seen.insert(child.id.as_str()) {
            report.violations.push(AssetError::DuplicateId(child_path.to_string()));
            continue;
        }
        if !node.kind.allowed_children().contains(&child.kind) {
            report.violations.push(AssetError::KindOrderViolation(child_path.to_string()));
            continue;
        }
        validate_node(child, &child_path, area_parameters, report);
    }
}

impl AssetTree {
    pub fn root(&self) -> &AssetNode {
        &self.root
    }

    pub fn root_path(&self) -> AssetPath {
        AssetPath(vec![self.root.id.clone()])
    }

    pub fn area_parameters(&self) -> &[String] {
        &self.area_parameters
    }

    pub fn resolve(&self, path: &AssetPath) -> Result<&AssetNode, AssetError> {
        let not_found = || AssetError::PathNotFound(path.to_string());
        let (first, rest) = path.0.split_first().ok_or_else(not_found)?;
        if *first != self.root.id {
            return Err(not_found());
        }
        rest.iter()
            .try_fold(&self.root, |node, seg| node.child(seg))
            .ok_or_else(not_found)
    }

    /// Resolves `path` and checks that it is a node of `kind`.
    pub fn resolve_kind(&self, path: &AssetPath, kind: NodeKind) -> Result<&AssetNode, AssetError> {
        let node = self.resolve(path)?;
        if node.kind == kind {
            Ok(node)
        } else {
            Err(AssetError::PathNotFound(path.to_string()))
        }
    }

    /// Depth-first, pre-order walk over every node with its path.
    pub fn walk(&self) -> Vec<(AssetPath, &AssetNode)> {
        fn go<'a>(node: &'a AssetNode, path: AssetPath, out: &mut Vec<(AssetPath, &'a AssetNode)>) {
            let children = node.children.iter().map(|c| (path.join(&c.id), c)).collect::<Vec<_>>();
            out.push((path, node));
            for (child_path, child) in children {
                go(child, child_path, out);
            }
        }
        let mut out = Vec::new();
        go(&self.root, self.root_path(), &mut out);
        out
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> Vec<(AssetPath, &AssetNode)> {
        self.walk().into_iter().filter(|(_, n)| n.kind == kind).collect()
    }

    pub fn parameters(&self) -> Vec<(AssetPath, &AssetNode)> {
        self.nodes_of_kind(NodeKind::Parameter)
    }

    pub fn areas(&self) -> Vec<(AssetPath, &AssetNode)> {
        self.nodes_of_kind(NodeKind::UserArea)
    }

    pub fn to_document(&self) -> AssetConfigDocument {
        AssetConfigDocument {
            building: self.root.clone(),
            area_parameters: Some(self.area_parameters.clone()),
        }
    }
}

/// The shipped three-floor library configuration.
pub fn demo_config() -> AssetConfigDocument {
    AssetConfigDocument::from_json(DEMO_CONFIG_JSON).expect("demo config is valid JSON")
}

pub const DEMO_CONFIG_JSON: &str = include_str!("../../../config/demo-assets.json");
