use chrono::{DateTime, Utc};

use crate::ingest::StationMeta;
use crate::time::HourGrid;
use crate::{Variable, NUM_VARIABLES};

/// One station's hourly-gridded multivariate series.
///
/// Storage is row-major `(hour, variable)`. A NaN value marks a cell that has
/// no value yet; after the full pipeline every cell is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct StationSeries {
    pub meta: StationMeta,
    pub grid: HourGrid,
    pub values: Vec<f64>,
    /// True where the value was originally observed (not interpolated or filled).
    pub mask: Vec<bool>,
    /// Signed minutes between the source observation and the grid hour.
    pub time_diff: Vec<i32>,
}

impl StationSeries {
    /// A series with every cell missing.
    pub fn empty(meta: StationMeta, grid: HourGrid) -> Self {
        let cells = grid.len * NUM_VARIABLES;
        StationSeries {
            meta,
            grid,
            values: vec![f64::NAN; cells],
            mask: vec![false; cells],
            time_diff: vec![0; cells],
        }
    }

    /// A fully observed series from row-major values.
    pub fn from_observed(meta: StationMeta, grid: HourGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len * NUM_VARIABLES, "value count does not match grid");
        let cells = values.len();
        StationSeries {
            meta,
            grid,
            values,
            mask: vec![true; cells],
            time_diff: vec![0; cells],
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len
    }

    pub fn is_empty(&self) -> bool {
        self.grid.len == 0
    }

    #[inline]
    pub fn idx(&self, t: usize, v: Variable) -> usize {
        t * NUM_VARIABLES + v.index()
    }

    #[inline]
    pub fn get(&self, t: usize, v: Variable) -> f64 {
        self.values[self.idx(t, v)]
    }

    #[inline]
    pub fn is_missing(&self, t: usize, v: Variable) -> bool {
        self.get(t, v).is_nan()
    }

    pub fn is_observed(&self, t: usize, v: Variable) -> bool {
        self.mask[self.idx(t, v)]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * NUM_VARIABLES..(t + 1) * NUM_VARIABLES]
    }

    pub fn column(&self, v: Variable) -> Vec<f64> {
        (0..self.len()).map(|t| self.get(t, v)).collect()
    }

    pub fn time_at(&self, t: usize) -> DateTime<Utc> {
        self.grid.time_at(t)
    }

    pub fn missing_cells(&self) -> usize {
        self.values.iter().filter(|x| x.is_nan()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// Fraction of cells that were originally observed.
    pub fn observed_fraction(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }

    /// Fraction of cells that hold a value of any origin.
    pub fn filled_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|x| !x.is_nan()).count() as f64 / self.values.len() as f64
    }

    /// Equality that treats NaN cells as equal to each other bit for bit.
    pub fn bitwise_eq(&self, other: &StationSeries) -> bool {
        self.meta == other.meta
            && self.grid == other.grid
            && self.mask == other.mask
            && self.time_diff == other.time_diff
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Copy of hours `[offset, offset + len)`.
    pub fn slice(&self, offset: usize, len: usize) -> StationSeries {
        let (a, b) = (offset * NUM_VARIABLES, (offset + len) * NUM_VARIABLES);
        StationSeries {
            meta: self.meta.clone(),
            grid: self.grid.sub_grid(offset, len),
            values: self.values[a..b].to_vec(),
            mask: self.mask[a..b].to_vec(),
            time_diff: self.time_diff[a..b].to_vec(),
        }
    }
}
