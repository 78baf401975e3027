//! Hourly grid arithmetic and calendar time markers.

use chrono::{DateTime, Datelike, Duration, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Parse an ISO-8601 UTC timestamp with second precision. A trailing `Z` is accepted.
pub fn parse_utc(s: &str) -> Option<DateTime<Utc>> {
    let s = s.strip_suffix('Z').unwrap_or(s);
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .ok()
        .map(|naive| naive.and_utc())
}

pub fn format_utc(t: DateTime<Utc>) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

pub fn is_on_hour(t: DateTime<Utc>) -> bool {
    t.minute() == 0 && t.second() == 0 && t.nanosecond() == 0
}

/// A contiguous run of whole UTC hours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourGrid {
    #[serde(with = "utc_string")]
    pub start: DateTime<Utc>,
    pub len: usize,
}

impl HourGrid {
    /// Panics if `start` is not on an hour mark.
    pub fn new(start: DateTime<Utc>, len: usize) -> Self {
        assert!(is_on_hour(start), "grid start {start} is not on an hour mark");
        HourGrid { start, len }
    }

    pub fn time_at(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::hours(index as i64)
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.time_at(self.len)
    }

    /// Index of the grid hour equal to `t`, if `t` lies exactly on the grid.
    pub fn index_of(&self, t: DateTime<Utc>) -> Option<usize> {
        let secs = (t - self.start).num_seconds();
        if secs < 0 || secs % 3600 != 0 {
            return None;
        }
        let idx = (secs / 3600) as usize;
        (idx < self.len).then_some(idx)
    }

    pub fn sub_grid(&self, offset: usize, len: usize) -> HourGrid {
        assert!(offset + len <= self.len, "sub-grid out of range");
        HourGrid {
            start: self.time_at(offset),
            len,
        }
    }
}

/// Calendar markers for one hourly step: month 1..=12, day 1..=31,
/// weekday 0..=6 (Monday = 0), hour 0..=23.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeMarker {
    pub month: u32,
    pub day: u32,
    pub weekday: u32,
    pub hour: u32,
}

/// Periods used to map each marker onto the unit circle.
pub const MARKER_PERIODS: [f64; 4] = [12.0, 31.0, 7.0, 24.0];

impl TimeMarker {
    pub fn of(t: DateTime<Utc>) -> Self {
        TimeMarker {
            month: t.month(),
            day: t.day(),
            weekday: t.weekday().num_days_from_monday(),
            hour: t.hour(),
        }
    }

    /// Markers scaled into `[0, 2π)` by their periods.
    pub fn phases(&self) -> [f64; 4] {
        let raw = [
            (self.month - 1) as f64,
            (self.day - 1) as f64,
            self.weekday as f64,
            self.hour as f64,
        ];
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = std::f64::consts::TAU * raw[i] / MARKER_PERIODS[i];
        }
        out
    }
}

pub(crate) mod utc_string {
    use chrono::{DateTime, Utc};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_utc(*t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        super::parse_utc(&raw).ok_or_else(|| D::Error::custom(format!("bad timestamp `{raw}`")))
    }
}
