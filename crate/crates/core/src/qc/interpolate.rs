use super::StationSeries;
use crate::variable::{angular_delta, wrap_degrees};
use crate::Variable;

pub const DEFAULT_MAX_GAP_HOURS: usize = 12;

/// Fill interior missing runs of at most `max_gap` hours by linear
/// interpolation between the bracketing values. Wind angle follows the
/// shortest arc. Leading and trailing runs, and longer runs, are left alone.
/// Filled cells keep `mask = false` and `time_diff = 0`.
pub fn interpolate_short_gaps(mut series: StationSeries, max_gap: usize) -> StationSeries {
    interpolate_in_place(&mut series, max_gap);
    series
}

pub(crate) fn interpolate_in_place(series: &mut StationSeries, max_gap: usize) -> usize {
    let mut filled = 0;
    let n = series.len();
    for var in Variable::ALL {
        let mut t = 0;
        while t < n {
            if !series.is_missing(t, var) {
                t += 1;
                continue;
            }
            let run_start = t;
            while t < n && series.is_missing(t, var) {
                t += 1;
            }
            let run_len = t - run_start;
            if run_start == 0 || t == n || run_len > max_gap {
                continue;
            }
            let left = series.get(run_start - 1, var);
            let right = series.get(t, var);
            let span = (run_len + 1) as f64;
            for k in 1..=run_len {
                let frac = k as f64 / span;
                let value = if var.is_angular() {
                    wrap_degrees(left + angular_delta(left, right) * frac)
                } else {
                    left + (right - left) * frac
                };
                let i = series.idx(run_start + k - 1, var);
                series.values[i] = value;
                series.time_diff[i] = 0;
                filled += 1;
            }
        }
    }
    filled
}
