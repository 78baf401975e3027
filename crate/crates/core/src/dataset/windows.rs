use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, Standardizer};
use crate::time::{HourGrid, TimeMarker};
use crate::NUM_VARIABLES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
    pub batch_size: usize,
}

impl WindowSpec {
    pub fn new(lookback: usize, horizon: usize) -> Self {
        WindowSpec {
            lookback,
            horizon,
            stride: 1,
            batch_size: 1,
        }
    }

    pub fn span(&self) -> usize {
        self.lookback + self.horizon
    }
}

/// Number of windows that fit in `len` hours.
pub fn window_count(len: usize, spec: &WindowSpec) -> usize {
    if len < spec.span() || spec.stride == 0 {
        0
    } else {
        (len - spec.span()) / spec.stride + 1
    }
}

/// Grid index of the first input hour of every window inside `range`.
pub fn window_starts(range: Range<usize>, spec: &WindowSpec) -> Result<Vec<usize>, DatasetError> {
    if spec.lookback == 0 || spec.horizon == 0 || spec.stride == 0 || spec.batch_size == 0 {
        return Err(DatasetError::Invalid(format!("window spec has a zero field: {spec:?}")));
    }
    let len = range.len();
    if len < spec.span() {
        return Err(DatasetError::SplitTooShort {
            len,
            needed: spec.span(),
        });
    }
    Ok((0..window_count(len, spec)).map(|k| range.start + k * spec.stride).collect())
}

/// Starts whose inputs and targets are fully finite.
pub fn complete_starts(iter: &WindowIter) -> Vec<usize> {
    iter.starts()
        .iter()
        .copied()
        .filter(|&s| {
            let b = iter.batch_for(&[s]);
            b.inputs.iter().chain(&b.targets).all(|x| x.is_finite())
        })
        .collect()
}

/// A batch of aligned input/target windows over all stations, standardized.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch {
    pub batch: usize,
    pub stations: usize,
    pub lookback: usize,
    pub horizon: usize,
    /// `(B, N, T, V)` row-major.
    pub inputs: Vec<f64>,
    /// `(B, N, τ, V)` row-major.
    pub targets: Vec<f64>,
    /// Calendar markers of each lookback step, `(B, T)`.
    pub markers: Vec<TimeMarker>,
    /// `(longitude, latitude)` in degrees per station.
    pub geo: Vec<(f64, f64)>,
    /// Grid index of the first input hour of each sample.
    pub origins: Vec<usize>,
    /// Grid of the dataset the batch was cut from.
    pub grid: HourGrid,
}

impl WindowBatch {
    #[inline]
    pub fn input_at(&self, b: usize, n: usize, t: usize, v: usize) -> f64 {
        self.inputs[((b * self.stations + n) * self.lookback + t) * NUM_VARIABLES + v]
    }

    #[inline]
    pub fn target_at(&self, b: usize, n: usize, t: usize, v: usize) -> f64 {
        self.targets[((b * self.stations + n) * self.horizon + t) * NUM_VARIABLES + v]
    }

    /// Grid index of the last observed hour of sample `b`.
    pub fn last_observed(&self, b: usize) -> usize {
        self.origins[b] + self.lookback - 1
    }

    /// Sub-batch holding only sample `b`.
    pub fn sample(&self, b: usize) -> WindowBatch {
        let inp = self.stations * self.lookback * NUM_VARIABLES;
        let tgt = self.stations * self.horizon * NUM_VARIABLES;
        WindowBatch {
            batch: 1,
            stations: self.stations,
            lookback: self.lookback,
            horizon: self.horizon,
            inputs: self.inputs[b * inp..(b + 1) * inp].to_vec(),
            targets: self.targets[b * tgt..(b + 1) * tgt].to_vec(),
            markers: self.markers[b * self.lookback..(b + 1) * self.lookback].to_vec(),
            geo: self.geo.clone(),
            origins: vec![self.origins[b]],
            grid: self.grid,
        }
    }
}

/// Iterator over window batches. Batches are cut from `starts` in order;
/// the last batch may be smaller than `batch_size`.
#[derive(Clone, Debug)]
pub struct WindowIter {
    standardized: Vec<Vec<f64>>,
    range_start: usize,
    geo: Vec<(f64, f64)>,
    grid: HourGrid,
    starts: Vec<usize>,
    pos: usize,
    spec: WindowSpec,
}

impl WindowIter {
    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn num_windows(&self) -> usize {
        self.starts.len()
    }

    /// Batch made of the given window starts.
    pub fn batch_for(&self, starts: &[usize]) -> WindowBatch {
        let (t_len, h_len) = (self.spec.lookback, self.spec.horizon);
        let n_st = self.standardized.len();
        let mut inputs = Vec::with_capacity(starts.len() * n_st * t_len * NUM_VARIABLES);
        let mut targets = Vec::with_capacity(starts.len() * n_st * h_len * NUM_VARIABLES);
        let mut markers = Vec::with_capacity(starts.len() * t_len);
        for &origin in starts {
            let local = origin - self.range_start;
            for series in &self.standardized {
                inputs.extend_from_slice(&series[local * NUM_VARIABLES..(local + t_len) * NUM_VARIABLES]);
            }
            for series in &self.standardized {
                targets.extend_from_slice(
                    &series[(local + t_len) * NUM_VARIABLES..(local + t_len + h_len) * NUM_VARIABLES],
                );
            }
            markers.extend((0..t_len).map(|t| TimeMarker::of(self.grid.time_at(origin + t))));
        }
        WindowBatch {
            batch: starts.len(),
            stations: n_st,
            lookback: t_len,
            horizon: h_len,
            inputs,
            targets,
            markers,
            geo: self.geo.clone(),
            origins: starts.to_vec(),
            grid: self.grid,
        }
    }
}

impl Iterator for WindowIter {
    type Item = WindowBatch;

    fn next(&mut self) -> Option<WindowBatch> {
        if self.pos >= self.starts.len() {
            return None;
        }
        let end = (self.pos + self.spec.batch_size).min(self.starts.len());
        let batch = self.batch_for(&self.starts[self.pos..end]);
        self.pos = end;
        Some(batch)
    }
}

/// Cut windows from `range` of the dataset grid. With a seed, window order
/// is shuffled deterministically; without one, it is chronological.
pub fn make_windows(
    dataset: &Dataset,
    standardizer: &Standardizer,
    range: Range<usize>,
    spec: WindowSpec,
    shuffle_seed: Option<u64>,
) -> Result<WindowIter, DatasetError> {
    if range.end > dataset.grid().len {
        return Err(DatasetError::Invalid(format!(
            "range {range:?} exceeds grid of {} hours",
            dataset.grid().len
        )));
    }
    let mut starts = window_starts(range.clone(), &spec)?;
    if let Some(seed) = shuffle_seed {
        starts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let standardized = dataset
        .series
        .iter()
        .map(|s| {
            let mut rows = s.values[range.start * NUM_VARIABLES..range.end * NUM_VARIABLES].to_vec();
            standardizer.standardize(&mut rows);
            rows
        })
        .collect();
    Ok(WindowIter {
        standardized,
        range_start: range.start,
        geo: dataset.series.iter().map(|s| (s.meta.longitude, s.meta.latitude)).collect(),
        grid: dataset.grid(),
        starts,
        pos: 0,
        spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::StationMeta;
    use crate::qc::StationSeries;
    use crate::time::parse_utc;
    use proptest::prelude::*;

    fn ramp_dataset(hours: usize, stations: usize) -> Dataset {
        let grid = HourGrid::new(parse_utc("2023-01-01T00:00:00").unwrap(), hours);
        let series = (0..stations)
            .map(|i| {
                let meta = StationMeta::new(format!("S{i}"), i as f64, -(i as f64), None).unwrap();
                let values = (0..hours * NUM_VARIABLES).map(|c| (c + 1000 * i) as f64).collect();
                StationSeries::from_observed(meta, grid, values)
            })
            .collect();
        Dataset::from_series(series, "/tmp").unwrap()
    }

    #[test]
    fn counts() {
        let spec = WindowSpec::new(48, 24);
        assert_eq!(window_starts(0..72, &spec).unwrap().len(), 1);
        assert_eq!(window_starts(0..77, &spec).unwrap().len(), 6);
        assert!(matches!(window_starts(0..71, &spec), Err(DatasetError::SplitTooShort { .. })));
        let strided = WindowSpec { stride: 5, ..spec };
        assert_eq!(window_starts(10..87, &strided).unwrap(), vec![10, 15]);
    }

    #[test]
    fn slices_match_direct_indexing() {
        let ds = ramp_dataset(60, 3);
        let spec = WindowSpec { lookback: 8, horizon: 4, stride: 3, batch_size: 4 };
        let iter = make_windows(&ds, &Standardizer::identity(), 5..50, spec, Some(11)).unwrap();
        let starts = iter.starts().to_vec();
        let mut seen = 0;
        for batch in iter {
            for b in 0..batch.batch {
                let origin = batch.origins[b];
                for n in 0..3 {
                    for t in 0..8 {
                        for v in 0..NUM_VARIABLES {
                            assert_eq!(batch.input_at(b, n, t, v), ds.series[n].values[(origin + t) * 5 + v]);
                        }
                    }
                    for t in 0..4 {
                        assert_eq!(batch.target_at(b, n, 0, 0), ds.series[n].values[(origin + 8) * 5]);
                        assert_eq!(batch.target_at(b, n, t, 4), ds.series[n].values[(origin + 8 + t) * 5 + 4]);
                    }
                }
                assert_eq!(batch.markers[b * 8].hour as usize, origin % 24);
                seen += 1;
            }
        }
        assert_eq!(seen, starts.len());
    }

    #[test]
    fn shuffle_is_seeded() {
        let ds = ramp_dataset(100, 1);
        let spec = WindowSpec::new(10, 5);
        let a = make_windows(&ds, &Standardizer::identity(), 0..100, spec, Some(3)).unwrap();
        let b = make_windows(&ds, &Standardizer::identity(), 0..100, spec, Some(3)).unwrap();
        let c = make_windows(&ds, &Standardizer::identity(), 0..100, spec, None).unwrap();
        assert_eq!(a.starts(), b.starts());
        assert_ne!(a.starts(), c.starts());
        assert!(c.starts().windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #[test]
        fn windows_stay_inside_their_split(start in 0usize..50, len in 0usize..200, lookback in 1usize..30, horizon in 1usize..30, stride in 1usize..7) {
            let spec = WindowSpec { lookback, horizon, stride, batch_size: 1 };
            match window_starts(start..start + len, &spec) {
                Ok(starts) => {
                    prop_assert_eq!(starts.len(), (len - lookback - horizon) / stride + 1);
                    for s in starts {
                        prop_assert!(s >= start && s + lookback + horizon <= start + len);
                    }
                }
                Err(_) => prop_assert!(len < lookback + horizon),
            }
        }
    }
}
