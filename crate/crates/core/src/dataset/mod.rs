//! Clean-series persistence, climate statistics, standardization,
//! chronological splits and training windows.

mod catalog;
mod csv_io;
mod split;
mod stats;
mod windows;

use thiserror::Error;

pub use catalog::{Dataset, DatasetCatalog, StatsPreset, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION};
pub use csv_io::{read_station_csv, read_station_from, write_station_csv, write_station_to, STATION_COLUMNS};
pub use split::{chronological_split, SplitMode, SplitRanges};
pub use stats::{
    compute_stats, nearest_rank, ClimateStats, StationThresholds, Standardizer, LOWER_LEVELS_PERMILLE,
    STD_FLOOR, UPPER_LEVELS_PERMILLE, WEATHER5K_MEAN, WEATHER5K_STD,
};
pub use windows::{complete_starts, make_windows, window_count, window_starts, WindowBatch, WindowIter, WindowSpec};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("schema mismatch in {context}: expected `{expected}`, found `{found}`")]
    SchemaMismatch {
        context: String,
        expected: String,
        found: String,
    },
    #[error("cannot parse `{value}` in column {column} at row {row}")]
    ValueParse { row: usize, column: String, value: String },
    #[error("training split holds no observed cells")]
    EmptyTrainingSplit,
    #[error("split of {len} hours is shorter than lookback + horizon = {needed}")]
    SplitTooShort { len: usize, needed: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl DatasetError {
    pub fn kind(&self) -> &'static str {
        match self {
            DatasetError::SchemaMismatch { .. } => "SchemaMismatch",
            DatasetError::ValueParse { .. } => "ValueParse",
            DatasetError::EmptyTrainingSplit => "EmptyTrainingSplit",
            DatasetError::SplitTooShort { .. } => "SplitTooShort",
            DatasetError::Invalid(_) => "InvalidDataset",
            DatasetError::Io { .. } => "IoFailure",
            DatasetError::Json(_) => "JsonError",
            DatasetError::Csv(_) => "CsvError",
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
