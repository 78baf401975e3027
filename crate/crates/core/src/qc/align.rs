use super::{QcError, StationSeries};
use crate::ingest::{RawObservation, StationMeta};
use crate::time::HourGrid;
use crate::Variable;

pub const DEFAULT_WINDOW_MINUTES: i64 = 30;

/// Snap observations onto the hourly grid.
///
/// Each grid hour takes the nearest non-missing observation within
/// `±window_minutes` (inclusive). Equal distances before and after the hour
/// resolve to the earlier observation. Observations must be time-sorted per
/// variable.
pub fn align_to_hours(
    meta: StationMeta,
    observations: &[RawObservation],
    grid: HourGrid,
    window_minutes: i64,
) -> Result<StationSeries, QcError> {
    let mut series = StationSeries::empty(meta, grid);
    let window_secs = window_minutes * 60;

    for var in Variable::ALL {
        let mut points: Vec<(i64, f64)> = Vec::new();
        let mut last_ts = i64::MIN;
        for (index, obs) in observations.iter().enumerate().filter(|(_, o)| o.variable == var) {
            let ts = obs.timestamp.timestamp();
            if ts < last_ts {
                return Err(QcError::UnsortedInput { variable: var, index });
            }
            last_ts = ts;
            if !obs.is_missing && obs.value.is_finite() {
                points.push((ts, obs.value));
            }
        }

        let start = grid.start.timestamp();
        let mut lo = 0usize;
        for t in 0..grid.len {
            let hour = start + 3600 * t as i64;
            while lo < points.len() && points[lo].0 < hour - window_secs {
                lo += 1;
            }
            let mut best: Option<(i64, f64)> = None;
            for &(ts, value) in points[lo..].iter().take_while(|(ts, _)| *ts <= hour + window_secs) {
                let offset = ts - hour;
                // strict comparison keeps the earliest of equally distant candidates
                if best.is_none_or(|(b, _)| offset.abs() < b.abs()) {
                    best = Some((offset, value));
                }
            }
            if let Some((offset, value)) = best {
                let i = series.idx(t, var);
                series.values[i] = value;
                series.mask[i] = true;
                series.time_diff[i] = (offset as f64 / 60.0).round() as i32;
            }
        }
    }
    Ok(series)
}
