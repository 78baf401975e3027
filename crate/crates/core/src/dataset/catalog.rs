use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_station_csv, write_station_csv, DatasetError};
use crate::ingest::{check_unique_ids, StationMeta};
use crate::parallel::Execution;
use crate::qc::StationSeries;
use crate::time::HourGrid;
use crate::Variable;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Where standardization mean/std come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsPreset {
    /// Pooled over the training split of this dataset.
    #[default]
    Computed,
    /// The published decadal statistics of the 5,672-station corpus.
    Weather5k,
}

/// Manifest describing a directory of station files on one shared hourly grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetCatalog {
    pub schema_version: u32,
    pub stations: Vec<StationMeta>,
    pub grid: HourGrid,
    pub variables: Vec<Variable>,
    #[serde(default)]
    pub stats_preset: StatsPreset,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetCatalog {
    pub fn new(stations: Vec<StationMeta>, grid: HourGrid, root: impl Into<PathBuf>) -> Self {
        DatasetCatalog {
            schema_version: MANIFEST_SCHEMA_VERSION,
            stations,
            grid,
            variables: Variable::ALL.to_vec(),
            stats_preset: StatsPreset::Computed,
            root: root.into(),
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(DatasetError::SchemaMismatch {
                context: "manifest schema_version".into(),
                expected: MANIFEST_SCHEMA_VERSION.to_string(),
                found: self.schema_version.to_string(),
            });
        }
        if self.variables != Variable::ALL {
            return Err(DatasetError::SchemaMismatch {
                context: "manifest variables".into(),
                expected: format!("{:?}", Variable::ALL),
                found: format!("{:?}", self.variables),
            });
        }
        for s in &self.stations {
            s.validate().map_err(|e| DatasetError::Invalid(e.to_string()))?;
        }
        check_unique_ids(&self.stations).map_err(|e| DatasetError::Invalid(e.to_string()))
    }

    pub fn load(manifest: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(manifest).map_err(|e| DatasetError::io(manifest, e))?;
        let mut catalog: DatasetCatalog = serde_json::from_str(&text)?;
        catalog.root = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        catalog.validate()?;
        Ok(catalog)
    }

    /// Load from a directory holding `manifest.json`, or from the manifest path itself.
    pub fn open(path: &Path) -> Result<Self, DatasetError> {
        if path.is_dir() {
            Self::load(&path.join(MANIFEST_FILE))
        } else {
            Self::load(path)
        }
    }

    pub fn save_manifest(&self) -> Result<PathBuf, DatasetError> {
        std::fs::create_dir_all(&self.root).map_err(|e| DatasetError::io(&self.root, e))?;
        let path = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").map_err(|e| DatasetError::io(&path, e))?;
        Ok(path)
    }

    pub fn station_path(&self, station_id: &str) -> PathBuf {
        self.root.join(format!("{station_id}.csv"))
    }

    /// Read every station file, checking each one against the manifest grid.
    pub fn read_all(&self, exec: Execution) -> Result<Dataset, DatasetError> {
        let series = exec
            .map(&self.stations, |meta| -> Result<StationSeries, DatasetError> {
                let mut s = read_station_csv(&self.station_path(&meta.station_id))?;
                if s.grid != self.grid {
                    return Err(DatasetError::SchemaMismatch {
                        context: format!("{} grid", meta.station_id),
                        expected: format!("{:?}", self.grid),
                        found: format!("{:?}", s.grid),
                    });
                }
                s.meta = meta.clone();
                Ok(s)
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset {
            catalog: self.clone(),
            series,
        })
    }
}

/// A catalog with every station series loaded, in catalog order.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub catalog: DatasetCatalog,
    pub series: Vec<StationSeries>,
}

impl Dataset {
    /// Build from in-memory series that share one grid.
    pub fn from_series(series: Vec<StationSeries>, root: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let first = series
            .first()
            .ok_or_else(|| DatasetError::Invalid("dataset needs at least one station".into()))?;
        let grid = first.grid;
        if let Some(bad) = series.iter().find(|s| s.grid != grid) {
            return Err(DatasetError::Invalid(format!(
                "station {} is not on the shared grid",
                bad.meta.station_id
            )));
        }
        let catalog = DatasetCatalog::new(series.iter().map(|s| s.meta.clone()).collect(), grid, root);
        catalog.validate()?;
        Ok(Dataset { catalog, series })
    }

    /// Open a catalog directory, or any directory of `<station_id>.csv`
    /// files in the station schema when it has no manifest. Plain
    /// directories are read in file-name order.
    pub fn open(path: &Path, exec: Execution) -> Result<Self, DatasetError> {
        if !path.is_dir() || path.join(MANIFEST_FILE).exists() {
            return DatasetCatalog::open(path)?.read_all(exec);
        }
        let entries = std::fs::read_dir(path).map_err(|e| DatasetError::io(path, e))?;
        let mut files = Vec::new();
        for entry in entries {
            let p = entry.map_err(|e| DatasetError::io(path, e))?.path();
            if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                files.push(p);
            }
        }
        files.sort();
        if files.is_empty() {
            return Err(DatasetError::Invalid(format!(
                "{} has neither {MANIFEST_FILE} nor station CSV files",
                path.display()
            )));
        }
        let series = exec
            .map(&files, |f| read_station_csv(f))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        Dataset::from_series(series, path)
    }

    pub fn grid(&self) -> HourGrid {
        self.catalog.grid
    }

    pub fn num_stations(&self) -> usize {
        self.series.len()
    }

    /// Write every station file and the manifest under the catalog root.
    pub fn save(&self) -> Result<PathBuf, DatasetError> {
        std::fs::create_dir_all(&self.catalog.root).map_err(|e| DatasetError::io(&self.catalog.root, e))?;
        for s in &self.series {
            write_station_csv(s, &self.catalog.station_path(&s.meta.station_id))?;
        }
        self.catalog.save_manifest()
    }
}
