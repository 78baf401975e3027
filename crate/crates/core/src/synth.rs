//! Synthetic station datasets for smoke tests and controlled experiments.

use std::f64::consts::PI;
use std::io::Write;
use std::str::FromStr;

use chrono::{DateTime, Duration, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetError;
use crate::dynamics::{integrate_station, Coefficients};
use crate::ingest::{default_schema, format_record_line, StationMeta, STATION_HEADER};
use crate::qc::{Climatology, StationSeries};
use crate::time::{parse_utc, HourGrid};
use crate::variable::wrap_degrees;
use crate::NUM_VARIABLES;

/// Typical level of each variable.
pub const BASE: [f64; NUM_VARIABLES] = [15.0, 8.0, 180.0, 4.0, 1013.0];
/// Typical diurnal amplitude of each variable.
pub const AMPLITUDE: [f64; NUM_VARIABLES] = [6.0, 4.0, 60.0, 2.0, 3.0];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Pure diurnal sinusoids with a per-station, per-variable phase.
    #[default]
    Sine,
    /// Diurnal cycle plus a stationary AR(1) anomaly.
    Ar1,
    /// Trajectories of the dynamic core driven by random forcing.
    Dynamic,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sine" => Ok(Preset::Sine),
            "ar1" => Ok(Preset::Ar1),
            "dynamic" => Ok(Preset::Dynamic),
            other => Err(format!("unknown preset `{other}` (expected sine, ar1 or dynamic)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub preset: Preset,
    pub stations: usize,
    pub hours: usize,
    pub start: DateTime<Utc>,
    pub seed: u64,
    /// Observation noise, as a multiple of each variable's amplitude.
    pub noise: f64,
    /// AR(1) coefficient for [`Preset::Ar1`].
    pub phi: f64,
    /// Generating coefficients for [`Preset::Dynamic`].
    pub coefficients: Coefficients,
}

impl SynthConfig {
    pub fn new(preset: Preset, stations: usize, hours: usize) -> Self {
        SynthConfig {
            preset,
            stations,
            hours,
            start: parse_utc("2020-01-01T00:00:00").expect("valid literal"),
            seed: 0,
            noise: 0.0,
            phi: 0.9,
            coefficients: Coefficients {
                kappa_t: 0.1,
                kappa_d: 0.1,
                kappa_v: 0.2,
                kappa_p: 0.05,
                beta: 0.5,
                dt: 1.0,
            },
        }
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn finish_row(row: &mut [f64; NUM_VARIABLES]) {
    row[2] = wrap_degrees(row[2]);
    row[3] = row[3].max(0.0);
}

fn diurnal(hour: f64, phase: f64) -> f64 {
    (2.0 * PI * hour / 24.0 + phase).sin()
}

/// Generate one series per station on an hourly grid from `cfg.start`.
pub fn synthesize(cfg: &SynthConfig) -> Result<Vec<StationSeries>, DatasetError> {
    if cfg.stations == 0 || cfg.hours == 0 {
        return Err(DatasetError::Invalid("synthetic dataset needs stations and hours".into()));
    }
    if !(cfg.noise >= 0.0 && cfg.phi.abs() < 1.0) {
        return Err(DatasetError::Invalid("noise must be >= 0 and |phi| < 1".into()));
    }
    if cfg.preset == Preset::Dynamic {
        cfg.coefficients
            .validate()
            .map_err(|e| DatasetError::Invalid(e.to_string()))?;
    }
    let grid = HourGrid::new(cfg.start, cfg.hours);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.stations);
    for i in 0..cfg.stations {
        let lat = rng.random_range(-60.0..60.0);
        let lon = rng.random_range(-180.0..180.0);
        let meta = StationMeta::new(format!("SYN{i:04}"), lat, lon, None)
            .map_err(|e| DatasetError::Invalid(e.to_string()))?;
        let phase: [f64; NUM_VARIABLES] = std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI));
        let mut values = Vec::with_capacity(cfg.hours * NUM_VARIABLES);
        match cfg.preset {
            Preset::Sine => {
                for t in 0..cfg.hours {
                    let hour = grid.time_at(t).hour() as f64;
                    let mut row: [f64; NUM_VARIABLES] = std::array::from_fn(|v| {
                        BASE[v] + AMPLITUDE[v] * (diurnal(hour, phase[v]) + cfg.noise * gauss(&mut rng))
                    });
                    finish_row(&mut row);
                    values.extend_from_slice(&row);
                }
            }
            Preset::Ar1 => {
                let innov = (1.0 - cfg.phi * cfg.phi).sqrt();
                let mut anomaly: [f64; NUM_VARIABLES] = std::array::from_fn(|_| 0.5 * gauss(&mut rng));
                for t in 0..cfg.hours {
                    let hour = grid.time_at(t).hour() as f64;
                    let mut row: [f64; NUM_VARIABLES] = std::array::from_fn(|v| {
                        BASE[v]
                            + AMPLITUDE[v]
                                * (0.5 * diurnal(hour, phase[v]) + anomaly[v] + cfg.noise * gauss(&mut rng))
                    });
                    finish_row(&mut row);
                    values.extend_from_slice(&row);
                    for a in anomaly.iter_mut() {
                        *a = cfg.phi * *a + 0.5 * innov * gauss(&mut rng);
                    }
                }
            }
            Preset::Dynamic => {
                let table: Vec<f64> = (0..12 * 24)
                    .flat_map(|b| {
                        let hour = (b % 24) as f64;
                        (0..NUM_VARIABLES).map(move |v| BASE[v] + 0.5 * AMPLITUDE[v] * diurnal(hour, phase[v]))
                    })
                    .collect();
                let clim = Climatology::from_table(table).map_err(|e| DatasetError::Invalid(e.to_string()))?;
                let mut state = BASE;
                let mut next = [0.0; NUM_VARIABLES];
                for t in 0..cfg.hours {
                    let mut row: [f64; NUM_VARIABLES] =
                        std::array::from_fn(|v| state[v] + cfg.noise * AMPLITUDE[v] * gauss(&mut rng));
                    finish_row(&mut row);
                    values.extend_from_slice(&row);
                    integrate_station(&cfg.coefficients, state, &clim, grid.time_at(t), &mut next)
                        .map_err(|e| DatasetError::Invalid(e.to_string()))?;
                    for v in [0, 1, 4] {
                        next[v] += 0.3 * AMPLITUDE[v] * gauss(&mut rng);
                    }
                    next[2] = wrap_degrees(next[2] + 5.0 * gauss(&mut rng));
                    next[3] = (next[3] + 0.1 * AMPLITUDE[3] * gauss(&mut rng)).max(0.0);
                    state = next;
                }
            }
        }
        out.push(StationSeries::from_observed(meta, grid, values));
    }
    Ok(out)
}

/// Write series as a raw station archive with observation times jittered by
/// up to ±20 minutes around each hour.
pub fn write_raw_archive<W: Write>(series: &[StationSeries], mut out: W, seed: u64) -> std::io::Result<()> {
    let schema = default_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in series {
        let m = &s.meta;
        writeln!(out, "{STATION_HEADER},{},{},{}", m.station_id, m.latitude, m.longitude)?;
        for t in 0..s.len() {
            let jitter = Duration::minutes(rng.random_range(-20..=20));
            let fields: Vec<(Option<f64>, u8)> = s
                .row(t)
                .iter()
                .map(|&x| (x.is_finite().then_some(x), 1))
                .collect();
            let line = format_record_line(s.time_at(t) + jitter, &schema, &fields)
                .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "value outside codec range"))?;
            writeln!(out, "{line}")?;
        }
    }
    out.flush()
}
