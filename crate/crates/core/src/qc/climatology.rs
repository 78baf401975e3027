use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::{QcError, StationSeries};
use crate::{Variable, NUM_VARIABLES};

const BUCKETS: usize = 12 * 24;

/// Per-station mean value by (month, hour-of-day), per variable.
///
/// Buckets without data hold the variable's station-wide mean, so lookups
/// are total. Wind angle uses circular means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Climatology {
    /// `[month 0..12][hour 0..24][variable]`, row-major.
    table: Vec<f64>,
    global_mean: [f64; NUM_VARIABLES],
    /// Number of (month, hour, variable) buckets that fell back to the global mean.
    pub fallback_buckets: usize,
}

#[derive(Clone, Copy, Default)]
struct Acc {
    n: usize,
    sum: f64,
    sin: f64,
    cos: f64,
}

impl Acc {
    fn push(&mut self, x: f64, angular: bool) {
        self.n += 1;
        if angular {
            let r = x.to_radians();
            self.sin += r.sin();
            self.cos += r.cos();
        } else {
            self.sum += x;
        }
    }

    fn mean(&self, angular: bool) -> Option<f64> {
        if self.n == 0 {
            return None;
        }
        Some(if angular {
            crate::variable::wrap_degrees(self.sin.atan2(self.cos).to_degrees())
        } else {
            self.sum / self.n as f64
        })
    }
}

fn bucket(month: u32, hour: u32) -> usize {
    (month as usize - 1) * 24 + hour as usize
}

impl Climatology {
    /// Climatology of the originally observed cells of `series`.
    pub fn from_series(series: &StationSeries) -> Result<Self, QcError> {
        Self::from_hours(series, 0..series.len())
    }

    /// Climatology restricted to the hours in `range`.
    pub fn from_hours(series: &StationSeries, range: std::ops::Range<usize>) -> Result<Self, QcError> {
        let mut acc = vec![Acc::default(); BUCKETS * NUM_VARIABLES];
        let mut global = [Acc::default(); NUM_VARIABLES];
        for t in range {
            let time = series.time_at(t);
            let b = bucket(time.month(), time.hour());
            for var in Variable::ALL {
                if !series.is_observed(t, var) {
                    continue;
                }
                let x = series.get(t, var);
                if !x.is_finite() {
                    continue;
                }
                acc[b * NUM_VARIABLES + var.index()].push(x, var.is_angular());
                global[var.index()].push(x, var.is_angular());
            }
        }
        let mut global_mean = [0.0; NUM_VARIABLES];
        for var in Variable::ALL {
            global_mean[var.index()] = global[var.index()].mean(var.is_angular()).ok_or_else(|| {
                QcError::ClimatologyUnavailable {
                    station_id: series.meta.station_id.clone(),
                    variable: var,
                }
            })?;
        }
        let mut fallback_buckets = 0;
        let table = acc
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let var = Variable::ALL[i % NUM_VARIABLES];
                a.mean(var.is_angular()).unwrap_or_else(|| {
                    fallback_buckets += 1;
                    global_mean[var.index()]
                })
            })
            .collect();
        Ok(Climatology {
            table,
            global_mean,
            fallback_buckets,
        })
    }

    /// The same value for every bucket.
    pub fn constant(values: [f64; NUM_VARIABLES]) -> Self {
        let table = (0..BUCKETS).flat_map(|_| values).collect();
        Climatology {
            table,
            global_mean: values,
            fallback_buckets: 0,
        }
    }

    /// Build from an explicit `[month][hour][variable]` table.
    pub fn from_table(table: Vec<f64>) -> Result<Self, QcError> {
        if table.len() != BUCKETS * NUM_VARIABLES || table.iter().any(|x| !x.is_finite()) {
            return Err(QcError::Shape(format!(
                "climatology table needs {} finite values",
                BUCKETS * NUM_VARIABLES
            )));
        }
        let mut global_mean = [0.0; NUM_VARIABLES];
        for var in Variable::ALL {
            let mut acc = Acc::default();
            for b in 0..BUCKETS {
                acc.push(table[b * NUM_VARIABLES + var.index()], var.is_angular());
            }
            global_mean[var.index()] = acc.mean(var.is_angular()).unwrap_or(0.0);
        }
        Ok(Climatology {
            table,
            global_mean,
            fallback_buckets: 0,
        })
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn global_mean(&self, var: Variable) -> f64 {
        self.global_mean[var.index()]
    }

    /// `month` in 1..=12, `hour` in 0..=23.
    pub fn lookup(&self, month: u32, hour: u32, var: Variable) -> f64 {
        self.table[bucket(month, hour) * NUM_VARIABLES + var.index()]
    }

    pub fn at(&self, time: DateTime<Utc>, var: Variable) -> f64 {
        self.lookup(time.month(), time.hour(), var)
    }

    pub fn min_max(&self, var: Variable) -> (f64, f64) {
        self.table
            .iter()
            .skip(var.index())
            .step_by(NUM_VARIABLES)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    }
}
