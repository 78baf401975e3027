use serde::{Deserialize, Serialize};

use super::{ForecastSet, MetricsError, Result};
use crate::dataset::{ClimateStats, LOWER_LEVELS_PERMILLE, UPPER_LEVELS_PERMILLE};
use crate::parallel::Execution;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleMode {
    /// `|θ̂ − θ|`.
    Plain,
    /// `min(d, 360 − d)` with `d = |θ̂ − θ| mod 360`.
    #[default]
    Circular,
}

impl std::str::FromStr for AngleMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "plain" => Ok(AngleMode::Plain),
            "circular" => Ok(AngleMode::Circular),
            other => Err(format!("unknown angle mode `{other}`")),
        }
    }
}

impl AngleMode {
    pub fn error(self, prediction: f64, target: f64) -> f64 {
        let d = (prediction - target).abs();
        match self {
            AngleMode::Plain => d,
            AngleMode::Circular => {
                let d = d % 360.0;
                d.min(360.0 - d)
            }
        }
    }
}

/// Inclusive range of 1-based lead hours.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LeadBucket {
    pub first: usize,
    pub last: usize,
}

impl LeadBucket {
    /// Leads `1..=hours`, the convention for a prediction length.
    pub fn cumulative(hours: usize) -> Self {
        LeadBucket { first: 1, last: hours }
    }

    pub fn single(lead: usize) -> Self {
        LeadBucket { first: lead, last: lead }
    }

    fn check(&self, horizon: usize) -> Result<()> {
        if self.first == 0 || self.last < self.first {
            return Err(MetricsError::EmptyBucket(format!("{}..={}", self.first, self.last)));
        }
        if self.last > horizon {
            return Err(MetricsError::BucketBeyondHorizon { bucket: self.last, horizon });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mae: f64,
    pub mse: f64,
    pub count: usize,
}

/// MAE and MSE per variable over all samples, stations and leads in
/// `bucket`. Angular variables use `angle_mode`.
pub fn mae_mse(set: &ForecastSet, bucket: LeadBucket, angle_mode: AngleMode, exec: Execution) -> Result<Vec<ErrorStats>> {
    bucket.check(set.horizon)?;
    if set.samples == 0 {
        return Err(MetricsError::EmptyBucket("forecast set has no samples".into()));
    }
    Ok(exec.map_range(set.num_variables(), |v| {
        let angular = set.variables[v].is_angular();
        let (mut abs, mut sq, mut count) = (0.0, 0.0, 0usize);
        for s in 0..set.samples {
            for n in 0..set.num_stations() {
                for k in bucket.first - 1..bucket.last {
                    let i = set.index(s, n, k, v);
                    let e = if angular {
                        angle_mode.error(set.predictions[i], set.targets[i])
                    } else {
                        (set.predictions[i] - set.targets[i]).abs()
                    };
                    abs += e;
                    sq += e * e;
                    count += 1;
                }
            }
        }
        ErrorStats {
            mae: abs / count as f64,
            mse: sq / count as f64,
            count,
        }
    }))
}

/// Pooled contingency counts of one (variable, level pair).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SediCounts {
    pub hits_lower: usize,
    pub hits_upper: usize,
    pub observed_lower: usize,
    pub observed_upper: usize,
}

impl SediCounts {
    /// Hits over observed extremes, with the denominator shared by both
    /// tails. `None` when the sample holds no observed extremes.
    pub fn value(&self) -> Option<f64> {
        let events = self.observed_lower + self.observed_upper;
        (events > 0).then(|| (self.hits_lower + self.hits_upper) as f64 / events as f64)
    }

    fn merge(&mut self, other: SediCounts) {
        self.hits_lower += other.hits_lower;
        self.hits_upper += other.hits_upper;
        self.observed_lower += other.observed_lower;
        self.observed_upper += other.observed_upper;
    }
}

/// Index into the threshold tables for an upper percentile level in
/// percent (90, 95, 98 or 99.5). The lower partner is `100 − p`.
pub fn sedi_levels(upper_percent: f64) -> Result<usize> {
    UPPER_LEVELS_PERMILLE
        .iter()
        .position(|&p| (p as f64 / 10.0 - upper_percent).abs() < 1e-9)
        .ok_or(MetricsError::UnsupportedLevel(upper_percent))
}

/// Per-variable SEDI counts for the level pair `level` (see
/// [`sedi_levels`]), with each station's own thresholds applied before the
/// counts are pooled. Stations lacking a threshold for a variable add
/// nothing to that variable.
pub fn sedi(set: &ForecastSet, stats: &ClimateStats, level: usize, exec: Execution) -> Result<Vec<SediCounts>> {
    if level >= UPPER_LEVELS_PERMILLE.len() {
        return Err(MetricsError::UnsupportedLevel(level as f64));
    }
    debug_assert_eq!(LOWER_LEVELS_PERMILLE.len(), UPPER_LEVELS_PERMILLE.len());
    let thresholds = set
        .station_ids
        .iter()
        .map(|id| stats.thresholds_for(id).ok_or_else(|| MetricsError::MissingThresholds(id.clone())))
        .collect::<Result<Vec<_>>>()?;
    let per_station = exec.map_range(set.num_stations(), |n| {
        set.variables
            .iter()
            .enumerate()
            .map(|(v, &var)| {
                let mut c = SediCounts::default();
                let Some((lo, hi)) = thresholds[n].pair(var, level) else {
                    return c;
                };
                for s in 0..set.samples {
                    for k in 0..set.horizon {
                        let i = set.index(s, n, k, v);
                        let (p, x) = (set.predictions[i], set.targets[i]);
                        if x < lo {
                            c.observed_lower += 1;
                            c.hits_lower += usize::from(p < lo);
                        }
                        if x > hi {
                            c.observed_upper += 1;
                            c.hits_upper += usize::from(p > hi);
                        }
                    }
                }
                c
            })
            .collect::<Vec<_>>()
    });
    let mut pooled = vec![SediCounts::default(); set.num_variables()];
    for station in per_station {
        for (acc, c) in pooled.iter_mut().zip(station) {
            acc.merge(c);
        }
    }
    Ok(pooled)
}
