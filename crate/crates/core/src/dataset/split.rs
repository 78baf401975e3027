use std::ops::Range;

use chrono::{Datelike, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::time::HourGrid;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Calendar years when the grid spans a whole number of decades, ratio otherwise.
    #[default]
    Auto,
    /// First 80% / next 10% / last 10% of hours.
    Ratio,
    /// Whole calendar years in 8:1:1 proportion; needs the grid to span whole years.
    Calendar,
}

/// Train/validation/test hour ranges, as grid indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitRanges {
    pub fn get(&self, name: &str) -> Option<Range<usize>> {
        match name {
            "train" => Some(self.train.clone()),
            "val" | "validation" => Some(self.val.clone()),
            "test" => Some(self.test.clone()),
            _ => None,
        }
    }
}

pub fn chronological_split(grid: &HourGrid, mode: SplitMode) -> Result<SplitRanges, DatasetError> {
    let n = grid.len;
    if n < 10 {
        return Err(DatasetError::Invalid(format!("cannot split {n} hours, need at least 10")));
    }
    let years = whole_years(grid);
    match (mode, years) {
        (SplitMode::Calendar, None) => Err(DatasetError::Invalid(
            "calendar split needs a grid that starts and ends on 1 January 00:00".into(),
        )),
        (SplitMode::Calendar, Some(y)) if y < 3 => {
            Err(DatasetError::Invalid(format!("calendar split needs at least 3 years, grid has {y}")))
        }
        (SplitMode::Calendar, Some(y)) => Ok(calendar_split(grid, y)),
        (SplitMode::Auto, Some(y)) if y % 10 == 0 => Ok(calendar_split(grid, y)),
        _ => Ok(SplitRanges {
            train: 0..n * 8 / 10,
            val: n * 8 / 10..n * 9 / 10,
            test: n * 9 / 10..n,
        }),
    }
}

fn whole_years(grid: &HourGrid) -> Option<i32> {
    let (s, e) = (grid.start, grid.end());
    let jan1 = |t: chrono::DateTime<Utc>| t.month() == 1 && t.day() == 1 && t.hour() == 0;
    (jan1(s) && jan1(e) && e.year() > s.year()).then(|| e.year() - s.year())
}

fn calendar_split(grid: &HourGrid, years: i32) -> SplitRanges {
    let held_out = ((years as f64) * 0.1).round().max(1.0) as i32;
    let train_years = years - 2 * held_out;
    let boundary = |offset: i32| {
        let t = Utc
            .with_ymd_and_hms(grid.start.year() + offset, 1, 1, 0, 0, 0)
            .single()
            .expect("1 January 00:00 is unambiguous in UTC");
        grid.index_of(t).unwrap_or(grid.len)
    };
    let a = boundary(train_years);
    let b = boundary(train_years + held_out);
    SplitRanges {
        train: 0..a,
        val: a..b,
        test: b..grid.len,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::parse_utc;

    #[test]
    fn decade_splits_by_year() {
        let start = parse_utc("2014-01-01T00:00:00").unwrap();
        let end = parse_utc("2024-01-01T00:00:00").unwrap();
        let grid = HourGrid::new(start, ((end - start).num_hours()) as usize);
        let s = chronological_split(&grid, SplitMode::Auto).unwrap();
        assert_eq!(grid.time_at(s.val.start), parse_utc("2022-01-01T00:00:00").unwrap());
        assert_eq!(grid.time_at(s.test.start), parse_utc("2023-01-01T00:00:00").unwrap());
        assert_eq!(s.test.end, grid.len);
        // ratio mode on the same grid lands a few hours off the year boundary
        let r = chronological_split(&grid, SplitMode::Ratio).unwrap();
        assert_ne!(r.val.start, s.val.start);
    }

    #[test]
    fn hundred_hours() {
        let grid = HourGrid::new(parse_utc("2023-03-01T05:00:00").unwrap(), 100);
        let s = chronological_split(&grid, SplitMode::Auto).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
        assert!(chronological_split(&grid, SplitMode::Calendar).is_err());
        let tiny = HourGrid::new(grid.start, 9);
        assert!(chronological_split(&tiny, SplitMode::Ratio).is_err());
    }

    #[test]
    fn every_hour_in_exactly_one_split() {
        for n in 10..300 {
            let grid = HourGrid::new(parse_utc("2023-01-01T00:00:00").unwrap(), n);
            let s = chronological_split(&grid, SplitMode::Ratio).unwrap();
            assert_eq!(s.val.start, s.train.end);
            assert_eq!(s.test.start, s.val.end);
            for h in 0..n {
                let hits = [&s.train, &s.val, &s.test].iter().filter(|r| r.contains(&h)).count();
                assert_eq!(hits, 1, "hour {h} of {n}");
            }
        }
    }
}
