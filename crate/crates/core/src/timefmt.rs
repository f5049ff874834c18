//! Second-precision UTC timestamps in the fixed `YYYY-MM-DDTHH:MM:SSZ` wire form.

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Deserializer, Serializer};

pub type Timestamp = DateTime<Utc>;

pub const FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

pub fn format(ts: &Timestamp) -> String {
    ts.format(FORMAT).to_string()
}

pub fn parse(text: &str) -> Result<Timestamp, chrono::ParseError> {
    NaiveDateTime::parse_from_str(text, FORMAT).map(|n| n.and_utc())
}

/// Compact form safe for identifiers (`20250101T100000Z`).
pub fn compact(ts: &Timestamp) -> String {
    ts.format("%Y%m%dT%H%M%SZ").to_string()
}

pub fn serialize<S: Serializer>(ts: &Timestamp, serializer: S) -> Result<S::Ok, S::Error> {
    serializer.collect_str(&ts.format(FORMAT))
}

pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Timestamp, D::Error> {
    let raw = String::deserialize(deserializer)?;
    parse(&raw).map_err(|e| serde::de::Error::custom(format!("bad timestamp {raw:?}: {e}")))
}

pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(ts: &Option<Timestamp>, serializer: S) -> Result<S::Ok, S::Error> {
        match ts {
            Some(ts) => serializer.collect_str(&ts.format(FORMAT)),
            None => serializer.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<Option<Timestamp>, D::Error> {
        Option::<String>::deserialize(deserializer)?
            .map(|raw| parse(&raw).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn round_trip() {
        let ts = Utc.with_ymd_and_hms(2025, 1, 1, 10, 0, 0).unwrap();
        assert_eq!(format(&ts), "2025-01-01T10:00:00Z");
        assert_eq!(parse("2025-01-01T10:00:00Z").unwrap(), ts);
        assert_eq!(compact(&ts), "20250101T100000Z");
        assert!(parse("2025-01-01T10:00:00+01:00").is_err());
    }
}
