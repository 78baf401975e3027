//! Quality control: hourly alignment, completeness screening, outlier
//! flagging, short-gap interpolation and long-gap filling.
//!
//! Stage order in [`run_pipeline`]:
//! align → completeness (on originally observed cells) → outliers →
//! interpolation → gap fill.

mod align;
mod climatology;
mod fill;
mod interpolate;
mod outliers;
mod pipeline;
mod series;

use thiserror::Error;

pub use align::{align_to_hours, DEFAULT_WINDOW_MINUTES};
pub use climatology::Climatology;
pub use fill::{fill_long_gaps, ClimatologyFiller, GapFiller, TableFiller};
pub use interpolate::{interpolate_short_gaps, DEFAULT_MAX_GAP_HOURS};
pub use outliers::{flag_outliers, OutlierPolicy};
pub use pipeline::{completeness_filter, run_pipeline, run_stations, QcConfig, QcReport};
pub use series::StationSeries;

use crate::Variable;

#[derive(Debug, Error)]
pub enum QcError {
    #[error("observations for {variable} are not time-sorted (index {index})")]
    UnsortedInput { variable: Variable, index: usize },
    #[error("station {station_id} has no valid {variable} data to build a climatology")]
    ClimatologyUnavailable { station_id: String, variable: Variable },
    #[error("gap filler `{filler}` has no value for station {station_id} at {time}")]
    FillUnavailable {
        filler: String,
        station_id: String,
        time: String,
    },
    #[error("series shape mismatch: {0}")]
    Shape(String),
}

impl QcError {
    pub fn kind(&self) -> &'static str {
        match self {
            QcError::UnsortedInput { .. } => "UnsortedInput",
            QcError::ClimatologyUnavailable { .. } => "ClimatologyUnavailable",
            QcError::FillUnavailable { .. } => "FillUnavailable",
            QcError::Shape(_) => "ShapeMismatch",
        }
    }
}
