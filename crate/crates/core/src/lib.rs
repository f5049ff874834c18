//! Lighting asset digital twin: asset hierarchy, telemetry, health classification and
//! diagnosis, trend forecasting, hierarchical health rollup, maintenance work orders, and a
//! deterministic library simulator.

pub mod asset;
pub mod eventlog;
pub mod forecast;
pub mod health;
pub mod level;
pub mod rollup;
pub mod sim;
pub mod telemetry;
pub mod timefmt;
pub mod workorder;

pub use asset::{AssetNode, AssetPath, AssetTree, Direction, NodeKind, ThresholdBands};
pub use level::{HealthLevel, LevelColor};
pub use timefmt::Timestamp;

use sha2::{Digest, Sha256};

/// First 16 hex digits of the SHA-256 of `input`; used for deterministic ids.
pub(crate) fn short_hash(input: &str) -> String {
    let digest = Sha256::digest(input.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
