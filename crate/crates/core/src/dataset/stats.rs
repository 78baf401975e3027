use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, StatsPreset};
use crate::parallel::Execution;
use crate::{Variable, NUM_VARIABLES};

/// Lower percentile levels in per-mille: 0.5%, 2%, 5%, 10%.
pub const LOWER_LEVELS_PERMILLE: [u32; 4] = [5, 20, 50, 100];
/// Upper percentile levels in per-mille: 90%, 95%, 98%, 99.5%.
pub const UPPER_LEVELS_PERMILLE: [u32; 4] = [900, 950, 980, 995];

/// Published decadal means, in variable order.
pub const WEATHER5K_MEAN: [f64; NUM_VARIABLES] = [12.71, 6.53, 191.19, 3.37, 1014.85];
/// Published decadal standard deviations, in variable order.
pub const WEATHER5K_STD: [f64; NUM_VARIABLES] = [13.08, 12.14, 99.67, 2.66, 9.17];

pub const STD_FLOOR: f64 = 1e-6;

/// Nearest-rank percentile of sorted data: the smallest value with at least
/// `permille / 1000` of the sample at or below it.
pub fn nearest_rank(sorted: &[f64], permille: u32) -> Option<f64> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let rank = (permille as usize * n).div_ceil(1000).clamp(1, n);
    Some(sorted[rank - 1])
}

/// Per-station extreme-value thresholds. `None` where the station has no
/// training data for a variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationThresholds {
    pub station_id: String,
    /// `[variable][level]`, levels as in [`LOWER_LEVELS_PERMILLE`].
    pub lower: [[Option<f64>; 4]; NUM_VARIABLES],
    /// `[variable][level]`, levels as in [`UPPER_LEVELS_PERMILLE`].
    pub upper: [[Option<f64>; 4]; NUM_VARIABLES],
}

impl StationThresholds {
    /// The (lower, upper) threshold pair for upper level index `k`
    /// (90% pairs with 10%, 99.5% with 0.5%).
    pub fn pair(&self, var: Variable, k: usize) -> Option<(f64, f64)> {
        Some((self.lower[var.index()][3 - k]?, self.upper[var.index()][k]?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClimateStats {
    pub preset: StatsPreset,
    pub mean: [f64; NUM_VARIABLES],
    pub std: [f64; NUM_VARIABLES],
    pub thresholds: Vec<StationThresholds>,
}

impl ClimateStats {
    pub fn standardizer(&self) -> Standardizer {
        Standardizer::new(self.mean, self.std)
    }

    pub fn thresholds_for(&self, station_id: &str) -> Option<&StationThresholds> {
        self.thresholds.iter().find(|t| t.station_id == station_id)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| DatasetError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Per-variable z-scoring with the standard deviation floored at [`STD_FLOOR`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; NUM_VARIABLES],
    pub std: [f64; NUM_VARIABLES],
}

impl Standardizer {
    pub fn new(mean: [f64; NUM_VARIABLES], std: [f64; NUM_VARIABLES]) -> Self {
        Standardizer {
            mean,
            std: std.map(|s| if s.is_finite() { s.max(STD_FLOOR) } else { STD_FLOOR }),
        }
    }

    pub fn identity() -> Self {
        Standardizer::new([0.0; NUM_VARIABLES], [1.0; NUM_VARIABLES])
    }

    #[inline]
    pub fn forward(&self, var: usize, x: f64) -> f64 {
        (x - self.mean[var]) / self.std[var]
    }

    #[inline]
    pub fn inverse(&self, var: usize, z: f64) -> f64 {
        z * self.std[var] + self.mean[var]
    }

    /// Standardize a `(..., V)` row-major buffer in place.
    pub fn standardize(&self, values: &mut [f64]) {
        for (i, x) in values.iter_mut().enumerate() {
            *x = self.forward(i % NUM_VARIABLES, *x);
        }
    }

    pub fn destandardize(&self, values: &mut [f64]) {
        for (i, x) in values.iter_mut().enumerate() {
            *x = self.inverse(i % NUM_VARIABLES, *x);
        }
    }
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0 {
            return o;
        }
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64,
        }
    }
}

/// Pooled mean/std and per-station percentiles over the observed cells in `train`.
///
/// Station partials are merged in station-id order, so the result does not
/// depend on the order of stations in the catalog.
pub fn compute_stats(dataset: &Dataset, train: Range<usize>, exec: Execution) -> Result<ClimateStats, DatasetError> {
    let partials = exec.map(&dataset.series, |s| {
        let mut moments = [Moments::default(); NUM_VARIABLES];
        let mut thresholds = StationThresholds {
            station_id: s.meta.station_id.clone(),
            lower: [[None; 4]; NUM_VARIABLES],
            upper: [[None; 4]; NUM_VARIABLES],
        };
        for var in Variable::ALL {
            let mut sample: Vec<f64> = train
                .clone()
                .filter(|&t| s.is_observed(t, var))
                .map(|t| s.get(t, var))
                .filter(|x| x.is_finite())
                .collect();
            for &x in &sample {
                moments[var.index()].push(x);
            }
            sample.sort_by(f64::total_cmp);
            for k in 0..4 {
                thresholds.lower[var.index()][k] = nearest_rank(&sample, LOWER_LEVELS_PERMILLE[k]);
                thresholds.upper[var.index()][k] = nearest_rank(&sample, UPPER_LEVELS_PERMILLE[k]);
            }
        }
        (moments, thresholds)
    });

    let mut order: Vec<usize> = (0..partials.len()).collect();
    order.sort_by(|&a, &b| partials[a].1.station_id.cmp(&partials[b].1.station_id));
    let mut pooled = [Moments::default(); NUM_VARIABLES];
    for &i in &order {
        for v in 0..NUM_VARIABLES {
            pooled[v] = pooled[v].merge(partials[i].0[v]);
        }
    }
    if pooled.iter().any(|m| m.n == 0) {
        return Err(DatasetError::EmptyTrainingSplit);
    }

    let (mean, std) = match dataset.catalog.stats_preset {
        StatsPreset::Computed => (
            pooled.map(|m| m.mean),
            pooled.map(|m| (m.m2 / m.n as f64).sqrt().max(STD_FLOOR)),
        ),
        StatsPreset::Weather5k => (WEATHER5K_MEAN, WEATHER5K_STD),
    };
    Ok(ClimateStats {
        preset: dataset.catalog.stats_preset,
        mean,
        std,
        thresholds: partials.into_iter().map(|(_, t)| t).collect(),
    })
}
