//! Timestamp decoding for the storage encodings found in Kardia app residue.
//!
//! Three binary encodings show up in the artifacts: GMT epoch values in
//! milliseconds or seconds (Android `ECG.db` and `shared_prefs`), and Mac
//! Absolute Time — seconds since 2001-01-01T00:00:00Z — in the iOS database
//! and plists. The `.atc` file header additionally stores an ISO-8601 string
//! with an explicit zone offset. Every decoded value is normalized to a UTC
//! instant at millisecond resolution; the raw value, its encoding and any
//! stored zone offset are kept alongside so a report can show exactly what
//! the source contained.

use chrono::{DateTime, FixedOffset, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds between the 1970 epoch and 2001-01-01T00:00:00Z: 11,323 days of
/// 86,400 s. Tests re-derive this by calendar brute force.
pub const MAC_ABSOLUTE_UNIX_OFFSET_SECS: i64 = 978_307_200;

/// How a timestamp was stored in its source artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampEncoding {
    EpochMillisGmt,
    EpochSecondsGmt,
    MacAbsoluteSeconds,
    Iso8601WithOffset,
}

impl TimestampEncoding {
    pub fn as_str(&self) -> &'static str {
        match self {
            TimestampEncoding::EpochMillisGmt => "epoch_millis_gmt",
            TimestampEncoding::EpochSecondsGmt => "epoch_seconds_gmt",
            TimestampEncoding::MacAbsoluteSeconds => "mac_absolute_seconds",
            TimestampEncoding::Iso8601WithOffset => "iso8601_with_offset",
        }
    }
}

impl std::str::FromStr for TimestampEncoding {
    type Err = TimestampError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "epoch_millis_gmt" => Ok(TimestampEncoding::EpochMillisGmt),
            "epoch_seconds_gmt" => Ok(TimestampEncoding::EpochSecondsGmt),
            "mac_absolute_seconds" => Ok(TimestampEncoding::MacAbsoluteSeconds),
            "iso8601_with_offset" => Ok(TimestampEncoding::Iso8601WithOffset),
            other => Err(TimestampError::UnknownEncoding(other.to_string())),
        }
    }
}

/// The value as it sat in the source: SQLite integer or real, or text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawTimestamp {
    Integer(i64),
    Real(f64),
    Text(String),
}

impl std::fmt::Display for RawTimestamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RawTimestamp::Integer(v) => write!(f, "{v}"),
            RawTimestamp::Real(v) => write!(f, "{v}"),
            RawTimestamp::Text(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TimestampError {
    #[error("raw value `{raw}` does not parse as {encoding:?}")]
    UnparseableRaw {
        raw: String,
        encoding: TimestampEncoding,
    },
    #[error("unknown timestamp encoding `{0}`")]
    UnknownEncoding(String),
    #[error("record carries no zone offset; only UTC can be reported")]
    MissingOffset,
}

/// A timestamp as recovered from an artifact: the stored value, the encoding
/// it was stored in, the zone offset stored next to it (if any), and the
/// derived UTC instant. `utc` is a pure function of (`raw`, `encoding`);
/// `offset_seconds` only ever affects local-time rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForensicTimestamp {
    pub raw: RawTimestamp,
    pub encoding: TimestampEncoding,
    pub offset_seconds: Option<i32>,
    #[serde(with = "iso_ms")]
    pub utc: DateTime<Utc>,
    pub source_field: String,
}

impl ForensicTimestamp {
    /// Decode `raw` under `encoding`. For [`TimestampEncoding::Iso8601WithOffset`]
    /// the offset recorded in the string wins over `offset_seconds`.
    pub fn new(
        raw: RawTimestamp,
        encoding: TimestampEncoding,
        offset_seconds: Option<i32>,
        source_field: impl Into<String>,
    ) -> Result<Self, TimestampError> {
        let (utc, parsed_offset) = normalize(&raw, encoding)?;
        Ok(ForensicTimestamp {
            raw,
            encoding,
            offset_seconds: parsed_offset.or(offset_seconds),
            utc,
            source_field: source_field.into(),
        })
    }

    pub fn from_epoch_millis(
        millis: i64,
        offset_seconds: Option<i32>,
        source_field: impl Into<String>,
    ) -> Result<Self, TimestampError> {
        Self::new(
            RawTimestamp::Integer(millis),
            TimestampEncoding::EpochMillisGmt,
            offset_seconds,
            source_field,
        )
    }

    pub fn from_iso8601(
        text: impl Into<String>,
        source_field: impl Into<String>,
    ) -> Result<Self, TimestampError> {
        Self::new(
            RawTimestamp::Text(text.into()),
            TimestampEncoding::Iso8601WithOffset,
            None,
            source_field,
        )
    }

    /// Same instant, different stored zone offset. Used when an offset is
    /// learned from a sibling artifact (e.g. the `.atc` header) after the
    /// database value was decoded.
    pub fn with_offset(mut self, offset_seconds: Option<i32>) -> Self {
        self.offset_seconds = offset_seconds;
        self
    }

    pub fn utc_millis(&self) -> i64 {
        self.utc.timestamp_millis()
    }

    /// Render the instant in the stored local zone as ISO-8601 text with an
    /// explicit numeric offset. Refuses (rather than guesses) when the source
    /// carried no offset.
    pub fn to_local(&self) -> Result<String, TimestampError> {
        let secs = self.offset_seconds.ok_or(TimestampError::MissingOffset)?;
        let offset = FixedOffset::east_opt(secs).ok_or(TimestampError::MissingOffset)?;
        let local = self.utc.with_timezone(&offset);
        Ok(local.format("%Y-%m-%dT%H:%M:%S%.3f%:z").to_string())
    }

    /// Canonical UTC rendering with millisecond precision.
    pub fn to_utc_string(&self) -> String {
        self.utc.to_rfc3339_opts(SecondsFormat::Millis, true)
    }
}

/// Decode a raw stored value into a UTC instant. Returns the instant plus the
/// zone offset when the encoding itself carries one (ISO-8601 text only).
pub fn normalize(
    raw: &RawTimestamp,
    encoding: TimestampEncoding,
) -> Result<(DateTime<Utc>, Option<i32>), TimestampError> {
    let err = || TimestampError::UnparseableRaw {
        raw: raw.to_string(),
        encoding,
    };
    match encoding {
        TimestampEncoding::EpochMillisGmt => {
            let ms = raw_as_millis(raw, 1.0).ok_or_else(err)?;
            Ok((utc_from_millis(ms).ok_or_else(err)?, None))
        }
        TimestampEncoding::EpochSecondsGmt => {
            let ms = raw_as_millis(raw, 1000.0).ok_or_else(err)?;
            Ok((utc_from_millis(ms).ok_or_else(err)?, None))
        }
        TimestampEncoding::MacAbsoluteSeconds => {
            let ms = raw_as_millis(raw, 1000.0)
                .and_then(|ms| ms.checked_add(MAC_ABSOLUTE_UNIX_OFFSET_SECS * 1000))
                .ok_or_else(err)?;
            Ok((utc_from_millis(ms).ok_or_else(err)?, None))
        }
        TimestampEncoding::Iso8601WithOffset => {
            let text = match raw {
                RawTimestamp::Text(t) => t.trim(),
                _ => return Err(err()),
            };
            let parsed = DateTime::parse_from_rfc3339(text).map_err(|_| err())?;
            let offset = parsed.offset().local_minus_utc();
            // Truncate to the millisecond resolution everything else uses.
            let utc = utc_from_millis(parsed.timestamp_millis()).ok_or_else(err)?;
            Ok((utc, Some(offset)))
        }
    }
}

/// Mac Absolute seconds (possibly fractional) to UTC; used by the binary
/// plist date object as well as database values.
pub fn mac_seconds_to_utc(seconds: f64) -> Option<DateTime<Utc>> {
    if !seconds.is_finite() {
        return None;
    }
    let ms = (seconds * 1000.0).round();
    if ms.abs() > 9.0e15 {
        return None;
    }
    utc_from_millis(ms as i64 + MAC_ABSOLUTE_UNIX_OFFSET_SECS * 1000)
}

fn utc_from_millis(ms: i64) -> Option<DateTime<Utc>> {
    Utc.timestamp_millis_opt(ms).single()
}

fn raw_as_millis(raw: &RawTimestamp, per_unit: f64) -> Option<i64> {
    match raw {
        RawTimestamp::Integer(v) => {
            if per_unit == 1.0 {
                Some(*v)
            } else {
                v.checked_mul(per_unit as i64)
            }
        }
        RawTimestamp::Real(f) => real_to_millis(*f, per_unit),
        RawTimestamp::Text(t) => {
            let t = t.trim();
            if let Ok(v) = t.parse::<i64>() {
                raw_as_millis(&RawTimestamp::Integer(v), per_unit)
            } else if let Ok(f) = t.parse::<f64>() {
                real_to_millis(f, per_unit)
            } else {
                None
            }
        }
    }
}

fn real_to_millis(value: f64, per_unit: f64) -> Option<i64> {
    if !value.is_finite() {
        return None;
    }
    let ms = (value * per_unit).round();
    if ms.abs() > 9.0e15 {
        return None;
    }
    Some(ms as i64)
}

/// Canonical `YYYY-MM-DDTHH:MM:SS.mmmZ` (de)serialization for instants.
pub mod iso_ms {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{self, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(dt: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&dt.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let text = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&text)
            .map(|dt| dt.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

/// `Option<DateTime<Utc>>` variant of [`iso_ms`].
pub mod iso_ms_opt {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{self, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(dt: &Option<DateTime<Utc>>, s: S) -> Result<S::Ok, S::Error> {
        match dt {
            Some(dt) => s.serialize_some(&dt.to_rfc3339_opts(SecondsFormat::Millis, true)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DateTime<Utc>>, D::Error> {
        let text: Option<String> = Option::deserialize(d)?;
        match text {
            Some(text) => DateTime::parse_from_rfc3339(&text)
                .map(|dt| Some(dt.with_timezone(&Utc)))
                .map_err(serde::de::Error::custom),
            None => Ok(None),
        }
    }
}
