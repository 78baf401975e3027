use serde::{Deserialize, Serialize};

use super::interpolate::interpolate_in_place;
use super::{flag_outliers, GapFiller, OutlierPolicy, QcError, StationSeries};
use crate::parallel::Execution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QcConfig {
    pub window_minutes: i64,
    pub max_gap_hours: usize,
    /// Stations need strictly more than this fraction of observed cells.
    pub completeness_threshold: f64,
    pub outliers: OutlierPolicy,
}

impl Default for QcConfig {
    fn default() -> Self {
        QcConfig {
            window_minutes: super::DEFAULT_WINDOW_MINUTES,
            max_gap_hours: super::DEFAULT_MAX_GAP_HOURS,
            completeness_threshold: 0.90,
            outliers: OutlierPolicy::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub station_id: String,
    /// Observed fraction after alignment, before any filling.
    pub hourly_coverage_before: f64,
    /// Fraction of cells holding a value after the pipeline.
    pub hourly_coverage_after: f64,
    pub interpolated_cells: usize,
    pub gap_filled_cells: usize,
    pub outliers_flagged: usize,
    pub accepted: bool,
}

/// Accept a station when its observed-cell fraction is strictly above `threshold`.
pub fn completeness_filter(series: &StationSeries, threshold: f64) -> (bool, QcReport) {
    let coverage = series.observed_fraction();
    let accepted = coverage > threshold;
    let report = QcReport {
        station_id: series.meta.station_id.clone(),
        hourly_coverage_before: coverage,
        hourly_coverage_after: series.filled_fraction(),
        interpolated_cells: 0,
        gap_filled_cells: 0,
        outliers_flagged: 0,
        accepted,
    };
    (accepted, report)
}

/// Run completeness, outlier, interpolation and gap-fill stages on an
/// aligned series. Rejected stations are returned after the completeness
/// check without further processing.
pub fn run_pipeline(
    mut series: StationSeries,
    config: &QcConfig,
    filler: &dyn GapFiller,
) -> Result<(StationSeries, QcReport), QcError> {
    let (accepted, mut report) = completeness_filter(&series, config.completeness_threshold);
    if !accepted {
        return Ok((series, report));
    }
    report.outliers_flagged = flag_outliers(&mut series, &config.outliers);
    report.interpolated_cells = interpolate_in_place(&mut series, config.max_gap_hours);
    report.gap_filled_cells = filler.fill(&mut series)?;
    report.hourly_coverage_after = series.filled_fraction();
    debug_assert!(series.is_complete());
    Ok((series, report))
}

/// Run the pipeline for many stations. Output order follows input order.
pub fn run_stations(
    stations: Vec<StationSeries>,
    config: &QcConfig,
    filler: &dyn GapFiller,
    exec: Execution,
) -> Vec<Result<(StationSeries, QcReport), QcError>> {
    let mut slots: Vec<Option<StationSeries>> = stations.into_iter().map(Some).collect();
    exec.map_mut(&mut slots, |slot| run_pipeline(slot.take().expect("each slot taken once"), config, filler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::StationMeta;
    use crate::qc::ClimatologyFiller;
    use crate::time::{parse_utc, HourGrid};
    use crate::Variable;

    fn with_coverage(observed_hours: usize, total: usize) -> StationSeries {
        let grid = HourGrid::new(parse_utc("2023-01-01T00:00:00").unwrap(), total);
        let mut s = StationSeries::from_observed(
            StationMeta::new("S", 0.0, 0.0, None).unwrap(),
            grid,
            (0..total).flat_map(|t| [t as f64 * 0.01, 0.0, 90.0, 2.0, 1010.0]).collect(),
        );
        for t in observed_hours..total {
            for v in Variable::ALL {
                let i = s.idx(t, v);
                s.values[i] = f64::NAN;
                s.mask[i] = false;
            }
        }
        s
    }

    #[test]
    fn completeness_is_strict() {
        assert!(!completeness_filter(&with_coverage(89, 100), 0.9).0);
        assert!(completeness_filter(&with_coverage(91, 100), 0.9).0);
        assert!(!completeness_filter(&with_coverage(90, 100), 0.9).0);
        assert!(!completeness_filter(&with_coverage(900, 1000), 0.9).0);
    }

    #[test]
    fn accepted_station_becomes_complete() {
        let (out, report) = run_pipeline(with_coverage(95, 100), &QcConfig::default(), &ClimatologyFiller).unwrap();
        assert!(report.accepted);
        assert!(out.is_complete());
        assert_eq!(report.hourly_coverage_after, 1.0);
        assert!(report.hourly_coverage_after >= report.hourly_coverage_before);
        assert_eq!(report.gap_filled_cells, 25);
    }

    #[test]
    fn rejected_station_untouched() {
        let input = with_coverage(50, 100);
        let (out, report) = run_pipeline(input.clone(), &QcConfig::default(), &ClimatologyFiller).unwrap();
        assert!(!report.accepted);
        assert!(out.bitwise_eq(&input));
        assert_eq!(report.hourly_coverage_after, input.filled_fraction());
    }
}
