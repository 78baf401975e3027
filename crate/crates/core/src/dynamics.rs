//! Simplified per-station physics used as the first-guess forecast.
//!
//! Each station relaxes toward its own hourly climatology:
//!
//! ```text
//! dT/dt = -κ_T (T - T_clim(t))
//! dD/dt = -κ_D (D - D_clim(t))
//! dP/dt = -κ_P (P - P_clim(t))
//! dV/dt =  β |dP/dt| - κ_V (V - V_clim(t)),   V >= 0
//! dθ/dt =  0
//! ```
//!
//! integrated with forward Euler. Stations do not interact.

use std::ops::Range;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Parameter;
use crate::qc::{Climatology, QcError, StationSeries};
use crate::{Variable, NUM_VARIABLES};

/// Fewest one-step pairs accepted per fitted relation.
pub const MIN_FIT_PAIRS: usize = 100;

const TEMP: usize = 0;
const DEW: usize = 1;
const ANGLE: usize = 2;
const RATE: usize = 3;
const SLP: usize = 4;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("unstable dynamic core configuration: {0}")]
    UnstableConfig(String),
    #[error("only {pairs} valid one-step pairs for {variable}, need {MIN_FIT_PAIRS}")]
    InsufficientData { variable: Variable, pairs: usize },
    #[error("last state of station {station} is not finite")]
    NonFiniteState { station: usize },
    #[error("state has {got} stations but {expected} climatologies are loaded")]
    StationMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Climatology(#[from] QcError),
}

impl DynamicsError {
    pub fn kind(&self) -> &'static str {
        match self {
            DynamicsError::UnstableConfig(_) => "UnstableConfig",
            DynamicsError::InsufficientData { .. } => "InsufficientData",
            DynamicsError::NonFiniteState { .. } => "NonFiniteState",
            DynamicsError::StationMismatch { .. } => "ShapeMismatch",
            DynamicsError::Climatology(e) => e.kind(),
        }
    }
}

/// Rates are per hour; `dt` is the Euler step in hours.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub kappa_t: f64,
    pub kappa_d: f64,
    pub kappa_v: f64,
    pub kappa_p: f64,
    pub beta: f64,
    pub dt: f64,
}

impl Coefficients {
    /// All tendencies zero: the integrator reproduces persistence.
    pub fn persistence() -> Self {
        Coefficients {
            kappa_t: 0.0,
            kappa_d: 0.0,
            kappa_v: 0.0,
            kappa_p: 0.0,
            beta: 0.0,
            dt: 1.0,
        }
    }

    fn kappas(&self) -> [(&'static str, f64); 4] {
        [
            ("kappa_t", self.kappa_t),
            ("kappa_d", self.kappa_d),
            ("kappa_v", self.kappa_v),
            ("kappa_p", self.kappa_p),
        ]
    }

    /// Euler sub-steps per hour.
    pub fn steps_per_hour(&self) -> Result<usize, DynamicsError> {
        self.validate()?;
        Ok((1.0 / self.dt).round() as usize)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(DynamicsError::UnstableConfig(format!("dt = {} must be in (0, 1]", self.dt)));
        }
        let per_hour = 1.0 / self.dt;
        if (per_hour - per_hour.round()).abs() > 1e-9 {
            return Err(DynamicsError::UnstableConfig(format!(
                "dt = {} does not divide one hour",
                self.dt
            )));
        }
        for (name, k) in self.kappas() {
            if !(k >= 0.0 && k * self.dt < 2.0) {
                return Err(DynamicsError::UnstableConfig(format!(
                    "{name} = {k} with dt = {} leaves 0 <= kappa*dt < 2",
                    self.dt
                )));
            }
        }
        if !self.beta.is_finite() {
            return Err(DynamicsError::UnstableConfig("beta is not finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicCoreParams {
    pub coefficients: Coefficients,
    /// Relaxation targets, one per station in dataset order.
    pub station_ids: Vec<String>,
    pub climatology: Vec<Climatology>,
}

impl DynamicCoreParams {
    pub fn new(coefficients: Coefficients, station_ids: Vec<String>, climatology: Vec<Climatology>) -> Self {
        assert_eq!(station_ids.len(), climatology.len());
        DynamicCoreParams {
            coefficients,
            station_ids,
            climatology,
        }
    }

    pub fn num_stations(&self) -> usize {
        self.climatology.len()
    }

    /// Integrate every station from `last_state` (N × V, physical units),
    /// observed at `start`. Returns N × τ × V where step `k` is the state at
    /// `start + (k + 1)` hours.
    pub fn integrate(&self, last_state: &[f64], start: DateTime<Utc>, horizon: usize) -> Result<Vec<f64>, DynamicsError> {
        let n = last_state.len() / NUM_VARIABLES;
        if last_state.len() != self.num_stations() * NUM_VARIABLES {
            return Err(DynamicsError::StationMismatch {
                expected: self.num_stations(),
                got: n,
            });
        }
        let mut out = vec![0.0; n * horizon * NUM_VARIABLES];
        for (i, clim) in self.climatology.iter().enumerate() {
            let state = &last_state[i * NUM_VARIABLES..(i + 1) * NUM_VARIABLES];
            if state.iter().any(|x| !x.is_finite()) {
                return Err(DynamicsError::NonFiniteState { station: i });
            }
            integrate_station(
                &self.coefficients,
                state.try_into().expect("row of V values"),
                clim,
                start,
                &mut out[i * horizon * NUM_VARIABLES..(i + 1) * horizon * NUM_VARIABLES],
            )?;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Checkpoint entries, prefixed `dynamic_core/`.
    pub fn to_entries(&self) -> Vec<Parameter> {
        let c = &self.coefficients;
        let mut out = vec![Parameter {
            name: "dynamic_core/coefficients".into(),
            shape: vec![6],
            values: vec![c.kappa_t, c.kappa_d, c.kappa_v, c.kappa_p, c.beta, c.dt],
        }];
        for (id, clim) in self.station_ids.iter().zip(&self.climatology) {
            out.push(Parameter {
                name: format!("dynamic_core/climatology/{id}"),
                shape: vec![12, 24, NUM_VARIABLES],
                values: clim.table().to_vec(),
            });
        }
        out
    }

    /// Inverse of [`to_entries`](Self::to_entries); other entries are ignored.
    pub fn from_entries(entries: &[Parameter]) -> Result<Self, DynamicsError> {
        let bad = |m: &str| DynamicsError::Climatology(QcError::Shape(m.to_string()));
        let coef = entries
            .iter()
            .find(|p| p.name == "dynamic_core/coefficients" && p.values.len() == 6)
            .ok_or_else(|| bad("checkpoint lacks dynamic core coefficients"))?;
        let v = &coef.values;
        let coefficients = Coefficients {
            kappa_t: v[0],
            kappa_d: v[1],
            kappa_v: v[2],
            kappa_p: v[3],
            beta: v[4],
            dt: v[5],
        };
        coefficients.validate()?;
        let mut station_ids = Vec::new();
        let mut climatology = Vec::new();
        for p in entries {
            if let Some(id) = p.name.strip_prefix("dynamic_core/climatology/") {
                station_ids.push(id.to_string());
                climatology.push(Climatology::from_table(p.values.clone())?);
            }
        }
        Ok(DynamicCoreParams::new(coefficients, station_ids, climatology))
    }
}

/// Integrate one station. `out` receives τ × V values.
pub fn integrate_station(
    coef: &Coefficients,
    state: [f64; NUM_VARIABLES],
    clim: &Climatology,
    start: DateTime<Utc>,
    out: &mut [f64],
) -> Result<(), DynamicsError> {
    let sub = coef.steps_per_hour()?;
    let dt = coef.dt;
    let horizon = out.len() / NUM_VARIABLES;
    let mut x = state;
    let step_seconds = (dt * 3600.0).round() as i64;
    for h in 0..horizon {
        for s in 0..sub {
            let t = start + Duration::hours(h as i64) + Duration::seconds(s as i64 * step_seconds);
            let c = |v: Variable| clim.at(t, v);
            let d_t = -coef.kappa_t * (x[TEMP] - c(Variable::Temperature));
            let d_d = -coef.kappa_d * (x[DEW] - c(Variable::Dewpoint));
            let d_p = -coef.kappa_p * (x[SLP] - c(Variable::SeaLevelPressure));
            let d_v = coef.beta * d_p.abs() - coef.kappa_v * (x[RATE] - c(Variable::WindRate));
            x[TEMP] += dt * d_t;
            x[DEW] += dt * d_d;
            x[SLP] += dt * d_p;
            x[RATE] = (x[RATE] + dt * d_v).max(0.0);
        }
        out[h * NUM_VARIABLES..(h + 1) * NUM_VARIABLES].copy_from_slice(&x);
    }
    debug_assert!(x[ANGLE] == state[ANGLE]);
    Ok(())
}

/// Per-station climatologies over `range` of the training grid.
pub fn station_climatologies(series: &[StationSeries], range: Range<usize>) -> Result<Vec<Climatology>, DynamicsError> {
    series
        .iter()
        .map(|s| Climatology::from_hours(s, range.clone()).map_err(DynamicsError::from))
        .collect()
}

#[derive(Default)]
struct Normal2 {
    pairs: usize,
    // Σ r1², Σ r1 r2, Σ r2², Σ r1 y, Σ r2 y, Σ y²
    s11: f64,
    s12: f64,
    s22: f64,
    s1y: f64,
    s2y: f64,
    syy: f64,
}

impl Normal2 {
    fn push(&mut self, r1: f64, r2: f64, y: f64) {
        self.pairs += 1;
        self.s11 += r1 * r1;
        self.s12 += r1 * r2;
        self.s22 += r2 * r2;
        self.s1y += r1 * y;
        self.s2y += r2 * y;
        self.syy += y * y;
    }

    /// A regressor whose energy is rounding noise next to the response's
    /// carries no signal.
    fn informative(&self, s: f64) -> bool {
        s > 1e-20 * self.syy.max(f64::MIN_POSITIVE) && s > 0.0
    }

    /// Least-squares coefficient for `y ≈ c·r1`; zero when r1 carries no signal.
    fn solve1(&self) -> f64 {
        if self.informative(self.s11) {
            self.s1y / self.s11
        } else {
            0.0
        }
    }

    /// Joint fit of `y ≈ c1·r1 + c2·r2`, falling back to separate fits when
    /// the regressors are collinear.
    fn solve2(&self) -> (f64, f64) {
        let det = self.s11 * self.s22 - self.s12 * self.s12;
        let both = self.informative(self.s11) && self.informative(self.s22);
        if both && det > 1e-12 * self.s11 * self.s22 {
            (
                (self.s1y * self.s22 - self.s2y * self.s12) / det,
                (self.s2y * self.s11 - self.s1y * self.s12) / det,
            )
        } else {
            let c1 = if self.informative(self.s11) { self.s1y / self.s11 } else { 0.0 };
            let c2 = if self.informative(self.s22) { self.s2y / self.s22 } else { 0.0 };
            (c1, c2)
        }
    }
}

/// Convert a fitted one-hour decay fraction into a per-hour rate for step `dt`,
/// clipped to `[0, 1/dt]`.
fn hourly_to_rate(k_hour: f64, dt: f64) -> f64 {
    let k_hour = k_hour.clamp(0.0, 1.0);
    let sub = (1.0 / dt).round();
    let kappa = (1.0 - (1.0 - k_hour).powf(1.0 / sub)) / dt;
    kappa.clamp(0.0, 1.0 / dt)
}

/// Fit coefficients by one-step least squares on lagged anomalies over the
/// training hours `range`. Only pairs of consecutive, originally observed
/// cells are used; pairs are pooled over all stations.
pub fn fit_params(
    series: &[StationSeries],
    range: Range<usize>,
    climatology: &[Climatology],
    dt: f64,
) -> Result<Coefficients, DynamicsError> {
    if series.len() != climatology.len() {
        return Err(DynamicsError::StationMismatch {
            expected: climatology.len(),
            got: series.len(),
        });
    }
    Coefficients { dt, ..Coefficients::persistence() }.validate()?;
    let mut relax: [Normal2; 3] = Default::default();
    let mut wind = Normal2::default();
    let targets = [Variable::Temperature, Variable::Dewpoint, Variable::SeaLevelPressure];
    for (s, clim) in series.iter().zip(climatology) {
        let end = range.end.min(s.len());
        for t in range.start..end.saturating_sub(1) {
            let time = s.time_at(t);
            let ok = |v: Variable| s.is_observed(t, v) && s.is_observed(t + 1, v);
            for (acc, &v) in relax.iter_mut().zip(&targets) {
                if ok(v) {
                    let a = s.get(t, v) - clim.at(time, v);
                    acc.push(-a, 0.0, s.get(t + 1, v) - s.get(t, v));
                }
            }
            let (p, r) = (Variable::SeaLevelPressure, Variable::WindRate);
            if ok(p) && ok(r) {
                let dp = (s.get(t + 1, p) - s.get(t, p)).abs();
                let a = s.get(t, r) - clim.at(time, r);
                wind.push(dp, -a, s.get(t + 1, r) - s.get(t, r));
            }
        }
    }
    for (acc, &v) in relax.iter().zip(&targets) {
        if acc.pairs < MIN_FIT_PAIRS {
            return Err(DynamicsError::InsufficientData { variable: v, pairs: acc.pairs });
        }
    }
    if wind.pairs < MIN_FIT_PAIRS {
        return Err(DynamicsError::InsufficientData {
            variable: Variable::WindRate,
            pairs: wind.pairs,
        });
    }
    let (beta, k_v) = wind.solve2();
    let coef = Coefficients {
        kappa_t: hourly_to_rate(relax[0].solve1(), dt),
        kappa_d: hourly_to_rate(relax[1].solve1(), dt),
        kappa_p: hourly_to_rate(relax[2].solve1(), dt),
        kappa_v: hourly_to_rate(k_v, dt),
        beta: if beta.is_finite() { beta.max(0.0) } else { 0.0 },
        dt,
    };
    coef.validate()?;
    Ok(coef)
}
