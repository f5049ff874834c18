//! Ordinal health levels and their fixed display colors.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Health state on a 1..=5 scale. Level 1 is the poorest condition, level 5 the most robust.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HealthLevel(u8);

impl HealthLevel {
    pub const WORST: HealthLevel = HealthLevel(1);
    pub const BEST: HealthLevel = HealthLevel(5);

    pub fn new(value: u8) -> Option<Self> {
        (1..=5).contains(&value).then_some(HealthLevel(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn color(self) -> LevelColor {
        match self.0 {
            1 => LevelColor::Red,
            2 => LevelColor::Orange,
            3 => LevelColor::Yellow,
            4 => LevelColor::Green,
            _ => LevelColor::Blue,
        }
    }

    pub fn from_color(color: LevelColor) -> Self {
        match color {
            LevelColor::Red => HealthLevel(1),
            LevelColor::Orange => HealthLevel(2),
            LevelColor::Yellow => HealthLevel(3),
            LevelColor::Green => HealthLevel(4),
            LevelColor::Blue => HealthLevel(5),
        }
    }

    /// All five levels, worst first.
    pub fn all() -> impl Iterator<Item = HealthLevel> {
        (1..=5).map(HealthLevel)
    }
}

impl fmt::Display for HealthLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

impl Serialize for HealthLevel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for HealthLevel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = u8::deserialize(deserializer)?;
        HealthLevel::new(raw)
            .ok_or_else(|| serde::de::Error::custom(format!("health level {raw} outside 1..=5")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelColor {
    Red,
    Orange,
    Yellow,
    Green,
    Blue,
}

impl LevelColor {
    pub fn as_str(self) -> &'static str {
        match self {
            LevelColor::Red => "red",
            LevelColor::Orange => "orange",
            LevelColor::Yellow => "yellow",
            LevelColor::Green => "green",
            LevelColor::Blue => "blue",
        }
    }
}
