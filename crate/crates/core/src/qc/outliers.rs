use serde::{Deserialize, Serialize};

use super::StationSeries;
use crate::{Variable, NUM_VARIABLES};

/// Two-stage outlier screen: hard physical bounds, then a rolling
/// median / MAD test on the remaining observed cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutlierPolicy {
    /// Inclusive plausible range per variable, in storage order.
    pub bounds: [(f64, f64); NUM_VARIABLES],
    /// A cell is flagged when `|x - median| > k * max(MAD, mad_floor)`.
    pub k: f64,
    /// Rolling window length in hours, centred on the cell.
    pub window_hours: usize,
    /// Lower limit on the MAD per variable, so quantized or calm series
    /// do not flag every small change.
    pub mad_floor: [f64; NUM_VARIABLES],
    /// Windows with fewer observed cells than this are not screened.
    pub min_window_samples: usize,
}

impl Default for OutlierPolicy {
    fn default() -> Self {
        OutlierPolicy {
            bounds: [(-90.0, 60.0), (-90.0, 45.0), (0.0, 360.0), (0.0, 115.0), (860.0, 1090.0)],
            k: 8.0,
            window_hours: 24,
            mad_floor: [0.5, 0.5, 0.0, 0.5, 0.5],
            min_window_samples: 6,
        }
    }
}

/// Flag outliers among observed cells. Flagged cells lose their value and
/// mask so later stages treat them as gaps. Screening repeats until no new
/// cell is flagged, which makes the stage idempotent. Returns the flag count.
pub fn flag_outliers(series: &mut StationSeries, policy: &OutlierPolicy) -> usize {
    let mut flagged = 0;
    for var in Variable::ALL {
        let (lo, hi) = policy.bounds[var.index()];
        for t in 0..series.len() {
            let x = series.get(t, var);
            if series.is_observed(t, var) && !x.is_nan() && !(lo..=hi).contains(&x) {
                clear(series, t, var);
                flagged += 1;
            }
        }
        // a circular median is not meaningful for wind angle
        if var.is_angular() {
            continue;
        }
        loop {
            let hits = mad_pass(series, var, policy);
            if hits.is_empty() {
                break;
            }
            flagged += hits.len();
            for t in hits {
                clear(series, t, var);
            }
        }
    }
    flagged
}

fn clear(series: &mut StationSeries, t: usize, var: Variable) {
    let i = series.idx(t, var);
    series.values[i] = f64::NAN;
    series.mask[i] = false;
    series.time_diff[i] = 0;
}

fn mad_pass(series: &StationSeries, var: Variable, policy: &OutlierPolicy) -> Vec<usize> {
    let n = series.len();
    let half = policy.window_hours / 2;
    let floor = policy.mad_floor[var.index()];
    let mut hits = Vec::new();
    let mut window = Vec::with_capacity(policy.window_hours + 1);
    let mut devs = Vec::with_capacity(policy.window_hours + 1);
    for t in 0..n {
        let x = series.get(t, var);
        if !series.is_observed(t, var) || x.is_nan() {
            continue;
        }
        window.clear();
        let (a, b) = (t.saturating_sub(half), (t + half).min(n - 1));
        window.extend((a..=b).filter(|&s| series.is_observed(s, var)).map(|s| series.get(s, var)));
        if window.len() < policy.min_window_samples {
            continue;
        }
        let med = median(&mut window);
        devs.clear();
        devs.extend(window.iter().map(|w| (w - med).abs()));
        let mad = median(&mut devs).max(floor);
        if (x - med).abs() > policy.k * mad {
            hits.push(t);
        }
    }
    hits
}

/// Median of a non-empty slice; sorts in place. Even lengths average the middle pair.
pub(crate) fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::StationMeta;
    use crate::time::{parse_utc, HourGrid};

    fn temperature_series(values: &[f64]) -> StationSeries {
        let grid = HourGrid::new(parse_utc("2023-01-01T00:00:00").unwrap(), values.len());
        let mut rows = Vec::new();
        for &x in values {
            rows.extend_from_slice(&[x, 0.0, 180.0, 3.0, 1013.0]);
        }
        StationSeries::from_observed(StationMeta::new("S", 0.0, 0.0, None).unwrap(), grid, rows)
    }

    #[test]
    fn hard_bound() {
        let mut s = temperature_series(&[10.0, 70.0, 10.0]);
        let policy = OutlierPolicy::default();
        assert_eq!(flag_outliers(&mut s, &policy), 1);
        assert!(s.is_missing(1, Variable::Temperature));
        assert!(!s.is_observed(1, Variable::Temperature));
    }

    #[test]
    fn spike_in_noisy_series() {
        // alternating 9/11: windows without the spike have MAD 0 (floored to
        // 0.5, threshold 4 > 2); windows with it have median 11 and MAD 2, so
        // only the spike (deviation 19 > 16) is flagged
        let mut v: Vec<f64> = (0..48).map(|t| if t % 2 == 0 { 9.0 } else { 11.0 }).collect();
        v[30] = 30.0;
        let mut s = temperature_series(&v);
        let flagged = flag_outliers(&mut s, &OutlierPolicy::default());
        assert_eq!(flagged, 1);
        assert!(s.is_missing(30, Variable::Temperature));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
