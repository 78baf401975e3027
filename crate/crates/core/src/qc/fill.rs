use std::collections::HashMap;

use super::{Climatology, QcError, StationSeries};
use crate::time::format_utc;
use crate::Variable;

/// Source of values for gaps that interpolation could not close.
pub trait GapFiller: Send + Sync {
    fn name(&self) -> &str;

    /// Fill every missing cell of `series`, returning how many were filled.
    /// Filled cells keep `mask = false` and `time_diff = 0`.
    fn fill(&self, series: &mut StationSeries) -> Result<usize, QcError>;
}

/// Fills from the station's own hourly climatology.
#[derive(Clone, Copy, Debug, Default)]
pub struct ClimatologyFiller;

impl GapFiller for ClimatologyFiller {
    fn name(&self) -> &str {
        "climatology"
    }

    fn fill(&self, series: &mut StationSeries) -> Result<usize, QcError> {
        if series.is_complete() {
            return Ok(0);
        }
        let clim = Climatology::from_series(series)?;
        let mut filled = 0;
        for t in 0..series.len() {
            let time = series.time_at(t);
            for var in Variable::ALL {
                if series.is_missing(t, var) {
                    let i = series.idx(t, var);
                    series.values[i] = clim.at(time, var);
                    series.time_diff[i] = 0;
                    filled += 1;
                }
            }
        }
        Ok(filled)
    }
}

/// Fills from externally supplied series (for example reanalysis extracts at
/// station locations), keyed by station id and matched by timestamp.
#[derive(Clone, Debug, Default)]
pub struct TableFiller {
    tables: HashMap<String, StationSeries>,
    fallback: Option<ClimatologyFiller>,
}

impl TableFiller {
    pub fn new(tables: impl IntoIterator<Item = StationSeries>) -> Self {
        TableFiller {
            tables: tables.into_iter().map(|s| (s.meta.station_id.clone(), s)).collect(),
            fallback: None,
        }
    }

    /// Use the station climatology for cells the table does not cover.
    pub fn with_climatology_fallback(mut self) -> Self {
        self.fallback = Some(ClimatologyFiller);
        self
    }
}

impl GapFiller for TableFiller {
    fn name(&self) -> &str {
        "table"
    }

    fn fill(&self, series: &mut StationSeries) -> Result<usize, QcError> {
        let table = self.tables.get(&series.meta.station_id);
        let mut filled = 0;
        let mut uncovered = None;
        for t in 0..series.len() {
            let time = series.time_at(t);
            let row = table.and_then(|tab| tab.grid.index_of(time).map(|r| (tab, r)));
            for var in Variable::ALL {
                if !series.is_missing(t, var) {
                    continue;
                }
                match row.map(|(tab, r)| tab.get(r, var)).filter(|x| x.is_finite()) {
                    Some(x) => {
                        let i = series.idx(t, var);
                        series.values[i] = x;
                        series.time_diff[i] = 0;
                        filled += 1;
                    }
                    None => {
                        uncovered.get_or_insert(time);
                    }
                }
            }
        }
        if let Some(time) = uncovered {
            match &self.fallback {
                Some(fallback) => filled += fallback.fill(series)?,
                None => {
                    return Err(QcError::FillUnavailable {
                        filler: self.name().to_string(),
                        station_id: series.meta.station_id.clone(),
                        time: format_utc(time),
                    })
                }
            }
        }
        Ok(filled)
    }
}

pub fn fill_long_gaps(mut series: StationSeries, filler: &dyn GapFiller) -> Result<StationSeries, QcError> {
    filler.fill(&mut series)?;
    Ok(series)
}
