//! Decoding of string-encoded surface observations.
//!
//! Raw station files are newline-delimited text. Each station block opens
//! with a header line
//!
//! ```text
//! #STATION,<id>,<latitude>,<longitude>[,<elevation>]
//! ```
//!
//! followed by one record per line: an ISO-8601 UTC timestamp and then one
//! `value,quality` pair per schema variable, e.g.
//!
//! ```text
//! 2023-01-01T12:55:00,+0130,1,+0080,1,270,1,0030,1,10132,1
//! ```

mod archive;
mod codec;
mod record;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use archive::{scan_archive, ArchiveScanner, ScanReport, StationRecords, STATION_HEADER};
pub use codec::{DecodedField, QualityPolicy, VariableCodec};
pub use record::{format_record_line, parse_record_line, RawObservation};

use crate::Variable;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed field{}: {reason} (byte offset {offset})", .field_index.map(|i| format!(" {i}")).unwrap_or_default())]
    MalformedField {
        field_index: Option<usize>,
        offset: usize,
        reason: String,
    },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("bad timestamp `{0}`")]
    BadTimestamp(String),
    #[error("invalid station metadata: {0}")]
    BadStation(String),
    #[error("invalid codec: {0}")]
    BadCodec(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl IngestError {
    pub fn kind(&self) -> &'static str {
        match self {
            IngestError::MalformedField { .. } => "MalformedField",
            IngestError::UnknownVariable(_) => "UnknownVariable",
            IngestError::BadTimestamp(_) => "BadTimestamp",
            IngestError::BadStation(_) => "BadStation",
            IngestError::BadCodec(_) => "BadCodec",
            IngestError::Io(_) => "IoFailure",
        }
    }

    pub(crate) fn malformed(field_index: Option<usize>, offset: usize, reason: impl Into<String>) -> Self {
        IngestError::MalformedField {
            field_index,
            offset,
            reason: reason.into(),
        }
    }
}

/// Static description of one station.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_id: String,
    /// Degrees north, in `[-90, 90]`.
    pub latitude: f64,
    /// Degrees east, in `[-180, 180)`.
    pub longitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elevation: Option<f64>,
}

impl StationMeta {
    pub fn new(
        station_id: impl Into<String>,
        latitude: f64,
        longitude: f64,
        elevation: Option<f64>,
    ) -> Result<Self, IngestError> {
        let meta = StationMeta {
            station_id: station_id.into(),
            latitude,
            longitude,
            elevation,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.station_id.trim().is_empty() {
            return Err(IngestError::BadStation("empty station id".into()));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(IngestError::BadStation(format!(
                "{}: latitude {} outside [-90, 90]",
                self.station_id, self.latitude
            )));
        }
        if !(-180.0..180.0).contains(&self.longitude) {
            return Err(IngestError::BadStation(format!(
                "{}: longitude {} outside [-180, 180)",
                self.station_id, self.longitude
            )));
        }
        Ok(())
    }
}

/// Check that station ids are unique within a catalog.
pub fn check_unique_ids<'a>(stations: impl IntoIterator<Item = &'a StationMeta>) -> Result<(), IngestError> {
    let mut seen = std::collections::HashSet::new();
    for s in stations {
        if !seen.insert(s.station_id.as_str()) {
            return Err(IngestError::BadStation(format!("duplicate station id `{}`", s.station_id)));
        }
    }
    Ok(())
}

/// The default five-field schema, in storage order.
pub fn default_schema() -> Vec<VariableCodec> {
    Variable::ALL.iter().map(|&v| VariableCodec::isd_default(v)).collect()
}
