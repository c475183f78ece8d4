//! Epoch timestamps as stored by WhatsApp, and their UTC decoding.
//!
//! Values stay as integers internally. A timezone only enters at render time.

use chrono::{DateTime, FixedOffset, TimeZone, Utc};
use serde::{Deserialize, Serialize};

/// Sentinel WhatsApp writes for "not set".
pub const ABSENT: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpochUnit {
    Seconds,
    Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EpochMillis(pub i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EpochSeconds(pub i64);

impl EpochMillis {
    pub const ABSENT: EpochMillis = EpochMillis(ABSENT);

    pub fn is_present(self) -> bool {
        self.0 >= 0
    }

    pub fn get(self) -> Option<i64> {
        self.is_present().then_some(self.0)
    }

    pub fn datetime(self) -> Option<DateTime<Utc>> {
        decode_epoch(self.0, EpochUnit::Millis).datetime()
    }

    pub fn from_datetime(dt: DateTime<Utc>) -> Self {
        EpochMillis(dt.timestamp_millis())
    }
}

impl EpochSeconds {
    pub const ABSENT: EpochSeconds = EpochSeconds(ABSENT);

    pub fn is_present(self) -> bool {
        self.0 >= 0
    }

    pub fn datetime(self) -> Option<DateTime<Utc>> {
        decode_epoch(self.0, EpochUnit::Seconds).datetime()
    }
}

/// Result of decoding a raw epoch integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodedEpoch {
    At(DateTime<Utc>),
    /// The `-1` sentinel.
    Absent,
    /// A negative value other than the sentinel, or one outside chrono's range.
    Invalid(i64),
}

impl DecodedEpoch {
    pub fn datetime(self) -> Option<DateTime<Utc>> {
        match self {
            DecodedEpoch::At(dt) => Some(dt),
            _ => None,
        }
    }

    /// A warning message for values that are neither a date nor the sentinel.
    pub fn warning(self) -> Option<String> {
        match self {
            DecodedEpoch::Invalid(v) => Some(format!("timestamp {v} is not a valid epoch value")),
            _ => None,
        }
    }
}

pub fn decode_epoch(value: i64, unit: EpochUnit) -> DecodedEpoch {
    if value == ABSENT {
        return DecodedEpoch::Absent;
    }
    if value < 0 {
        return DecodedEpoch::Invalid(value);
    }
    let decoded = match unit {
        EpochUnit::Seconds => Utc.timestamp_opt(value, 0).single(),
        EpochUnit::Millis => Utc.timestamp_millis_opt(value).single(),
    };
    decoded.map_or(DecodedEpoch::Invalid(value), DecodedEpoch::At)
}

/// Renders a UTC instant in the requested offset, with millisecond precision.
pub fn render(dt: DateTime<Utc>, offset: FixedOffset) -> String {
    dt.with_timezone(&offset)
        .format("%Y-%m-%dT%H:%M:%S%.3f%:z")
        .to_string()
}

pub fn render_millis(ms: EpochMillis, offset: FixedOffset) -> Option<String> {
    ms.datetime().map(|dt| render(dt, offset))
}

/// Parses `+01:00`, `-0530`, `Z` or `UTC`.
pub fn parse_offset(text: &str) -> Option<FixedOffset> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("z") || t.eq_ignore_ascii_case("utc") {
        return FixedOffset::east_opt(0);
    }
    let (sign, rest) = match t.as_bytes().first()? {
        b'+' => (1, &t[1..]),
        b'-' => (-1, &t[1..]),
        _ => return None,
    };
    let digits: String = rest.chars().filter(|c| *c != ':').collect();
    if digits.len() != 4 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let hours: i32 = digits[..2].parse().ok()?;
    let minutes: i32 = digits[2..].parse().ok()?;
    if minutes >= 60 {
        return None;
    }
    FixedOffset::east_opt(sign * (hours * 3600 + minutes * 60))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utc() -> FixedOffset {
        FixedOffset::east_opt(0).unwrap()
    }

    #[test]
    fn millis_with_fraction() {
        let dt = decode_epoch(1381932937884, EpochUnit::Millis).datetime().unwrap();
        assert_eq!(render(dt, utc()), "2013-10-16T14:15:37.884+00:00");
    }

    #[test]
    fn sentinel_and_negative() {
        assert_eq!(decode_epoch(-1, EpochUnit::Millis), DecodedEpoch::Absent);
        assert_eq!(decode_epoch(-1, EpochUnit::Seconds), DecodedEpoch::Absent);
        let bad = decode_epoch(-7, EpochUnit::Seconds);
        assert_eq!(bad, DecodedEpoch::Invalid(-7));
        assert!(bad.warning().is_some());
        assert!(DecodedEpoch::Absent.warning().is_none());
    }

    #[test]
    fn epoch_zero() {
        let dt = decode_epoch(0, EpochUnit::Seconds).datetime().unwrap();
        assert_eq!(render(dt, utc()), "1970-01-01T00:00:00.000+00:00");
    }

    #[test]
    fn offset_parsing() {
        assert_eq!(parse_offset("+01:00").unwrap().local_minus_utc(), 3600);
        assert_eq!(parse_offset("-0530").unwrap().local_minus_utc(), -19800);
        assert_eq!(parse_offset("Z").unwrap().local_minus_utc(), 0);
        assert!(parse_offset("01:00").is_none());
        assert!(parse_offset("+1:0").is_none());
    }

    #[test]
    fn rendering_applies_offset() {
        let dt = decode_epoch(1363078943, EpochUnit::Seconds).datetime().unwrap();
        assert_eq!(render(dt, parse_offset("+01:00").unwrap()), "2013-03-12T10:02:23.000+01:00");
    }
}
