//! Reference forecasters: persistence, climatology and a direct linear map.
//!
//! All forecasters read standardized [`WindowBatch`]es and return
//! standardized `(B, N, τ, V)` forecasts, the same contract as the model.

use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Standardizer, WindowBatch, WindowIter};
use crate::model::{ModelError, PhysicsFormer};
use crate::qc::Climatology;
use crate::NUM_VARIABLES;

pub const DEFAULT_RIDGE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("batch shape does not match the forecaster: {0}")]
    ShapeMismatch(String),
    #[error("no complete training windows to fit on")]
    NoTrainingData,
    #[error("least-squares system could not be solved")]
    Singular,
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl BaselineError {
    pub fn kind(&self) -> &'static str {
        match self {
            BaselineError::ShapeMismatch(_) => "ShapeMismatch",
            BaselineError::NoTrainingData => "EmptyTrainingSplit",
            BaselineError::Singular => "SingularSystem",
            BaselineError::Model(e) => e.kind(),
        }
    }
}

pub type Result<T> = std::result::Result<T, BaselineError>;

/// Anything that maps a window batch to a standardized forecast.
pub trait Forecaster: Sync {
    fn name(&self) -> &str;
    fn forecast(&self, batch: &WindowBatch) -> Result<Vec<f64>>;
    /// Trainable scalar count.
    fn num_parameters(&self) -> usize;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Persistence,
    Climatology,
    LinearDirect,
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "persistence" => Ok(BaselineKind::Persistence),
            "climatology" => Ok(BaselineKind::Climatology),
            "linear" | "linear_direct" => Ok(BaselineKind::LinearDirect),
            other => Err(format!("unknown baseline `{other}`")),
        }
    }
}

/// Repeats the last input hour at every lead.
#[derive(Clone, Copy, Debug, Default)]
pub struct Persistence;

impl Forecaster for Persistence {
    fn name(&self) -> &str {
        "persistence"
    }

    fn forecast(&self, batch: &WindowBatch) -> Result<Vec<f64>> {
        let (n, t_len, tau) = (batch.stations, batch.lookback, batch.horizon);
        let mut out = Vec::with_capacity(batch.batch * n * tau * NUM_VARIABLES);
        for b in 0..batch.batch {
            for i in 0..n {
                let base = ((b * n + i) * t_len + t_len - 1) * NUM_VARIABLES;
                let last = &batch.inputs[base..base + NUM_VARIABLES];
                for _ in 0..tau {
                    out.extend_from_slice(last);
                }
            }
        }
        Ok(out)
    }

    fn num_parameters(&self) -> usize {
        0
    }
}

/// Station climatology at each target (month, hour).
#[derive(Clone, Debug)]
pub struct ClimatologyForecast {
    pub climatology: Vec<Climatology>,
    pub standardizer: Standardizer,
}

impl Forecaster for ClimatologyForecast {
    fn name(&self) -> &str {
        "climatology"
    }

    fn forecast(&self, batch: &WindowBatch) -> Result<Vec<f64>> {
        if batch.stations != self.climatology.len() {
            return Err(BaselineError::ShapeMismatch(format!(
                "{} stations in batch, {} climatologies",
                batch.stations,
                self.climatology.len()
            )));
        }
        let tau = batch.horizon;
        let mut out = Vec::with_capacity(batch.batch * batch.stations * tau * NUM_VARIABLES);
        for b in 0..batch.batch {
            let last = batch.last_observed(b);
            for clim in &self.climatology {
                for k in 0..tau {
                    let time = batch.grid.time_at(last + k + 1);
                    for (v, var) in crate::Variable::ALL.iter().enumerate() {
                        out.push(self.standardizer.forward(v, clim.at(time, *var)));
                    }
                }
            }
        }
        Ok(out)
    }

    fn num_parameters(&self) -> usize {
        0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearMode {
    /// One `T → τ` map per variable.
    #[default]
    PerVariable,
    /// One `T·V → τ·V` map over all variables.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearBlock {
    pub inputs: usize,
    pub outputs: usize,
    /// `inputs × outputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearBlock {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (yo, w) in y.iter_mut().zip(row) {
                *yo += xi * w;
            }
        }
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Ridge fit on centered data, so the bias is not penalized.
    pub fn fit(xs: &[Vec<f64>], ys: &[Vec<f64>], ridge: f64) -> Result<LinearBlock> {
        let (n, d, m) = (xs.len(), xs.first().map_or(0, Vec::len), ys.first().map_or(0, Vec::len));
        if n == 0 {
            return Err(BaselineError::NoTrainingData);
        }
        let mean = |rows: &[Vec<f64>], k: usize| -> Vec<f64> {
            let mut acc = vec![0.0; k];
            for r in rows {
                for (a, x) in acc.iter_mut().zip(r) {
                    *a += x;
                }
            }
            acc.iter().map(|a| a / n as f64).collect()
        };
        let (mx, my) = (mean(xs, d), mean(ys, m));
        let x = DMatrix::from_fn(n, d, |r, c| xs[r][c] - mx[c]);
        let y = DMatrix::from_fn(n, m, |r, c| ys[r][c] - my[c]);
        let xt = x.transpose();
        let a = &xt * &x + DMatrix::identity(d, d) * ridge;
        let rhs = &xt * &y;
        let w = match a.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => a.svd(true, true).solve(&rhs, 1e-12).map_err(|_| BaselineError::Singular)?,
        };
        let mut bias = my;
        for (c, b) in bias.iter_mut().enumerate() {
            *b -= (0..d).map(|r| mx[r] * w[(r, c)]).sum::<f64>();
        }
        let mut weights = Vec::with_capacity(d * m);
        for r in 0..d {
            for c in 0..m {
                weights.push(w[(r, c)]);
            }
        }
        Ok(LinearBlock {
            inputs: d,
            outputs: m,
            weights,
            bias,
        })
    }
}

/// Least-squares map from the flattened lookback to the flattened horizon,
/// shared by all stations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearDirect {
    pub mode: LinearMode,
    pub lookback: usize,
    pub horizon: usize,
    pub ridge: f64,
    pub blocks: Vec<LinearBlock>,
}

fn clean(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

/// `(inputs, targets)` per (window, station); inputs `T × V`, targets `τ × V`.
pub type WindowRows = Vec<(Vec<f64>, Vec<f64>)>;

/// Per-station rows of the complete windows among `starts`.
pub fn window_rows(iter: &WindowIter, starts: &[usize]) -> WindowRows {
    let mut rows = Vec::new();
    for &s in starts {
        let b = iter.batch_for(&[s]);
        if !b.inputs.iter().chain(&b.targets).all(|x| x.is_finite()) {
            continue;
        }
        let (ti, to) = (b.lookback * NUM_VARIABLES, b.horizon * NUM_VARIABLES);
        for i in 0..b.stations {
            rows.push((b.inputs[i * ti..(i + 1) * ti].to_vec(), b.targets[i * to..(i + 1) * to].to_vec()));
        }
    }
    rows
}

impl LinearDirect {
    pub fn fit(rows: &WindowRows, lookback: usize, horizon: usize, mode: LinearMode, ridge: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(BaselineError::NoTrainingData);
        }
        if rows
            .iter()
            .any(|(x, y)| x.len() != lookback * NUM_VARIABLES || y.len() != horizon * NUM_VARIABLES)
        {
            return Err(BaselineError::ShapeMismatch("row length disagrees with lookback/horizon".into()));
        }
        let blocks = match mode {
            LinearMode::Full => {
                let xs: Vec<Vec<f64>> = rows.iter().map(|(x, _)| x.clone()).collect();
                let ys: Vec<Vec<f64>> = rows.iter().map(|(_, y)| y.clone()).collect();
                vec![LinearBlock::fit(&xs, &ys, ridge)?]
            }
            LinearMode::PerVariable => (0..NUM_VARIABLES)
                .map(|v| {
                    let pick = |r: &[f64]| r.iter().skip(v).step_by(NUM_VARIABLES).copied().collect::<Vec<_>>();
                    let xs: Vec<Vec<f64>> = rows.iter().map(|(x, _)| pick(x)).collect();
                    let ys: Vec<Vec<f64>> = rows.iter().map(|(_, y)| pick(y)).collect();
                    LinearBlock::fit(&xs, &ys, ridge)
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(LinearDirect {
            mode,
            lookback,
            horizon,
            ridge,
            blocks,
        })
    }

    fn forecast_row(&self, x: &[f64], out: &mut [f64]) {
        match self.mode {
            LinearMode::Full => {
                let x: Vec<f64> = x.iter().map(|&v| clean(v)).collect();
                self.blocks[0].apply(&x, out);
            }
            LinearMode::PerVariable => {
                let mut y = vec![0.0; self.horizon];
                for (v, block) in self.blocks.iter().enumerate() {
                    let xv: Vec<f64> = x.iter().skip(v).step_by(NUM_VARIABLES).map(|&a| clean(a)).collect();
                    block.apply(&xv, &mut y);
                    for (k, yk) in y.iter().enumerate() {
                        out[k * NUM_VARIABLES + v] = *yk;
                    }
                }
            }
        }
    }
}

impl Forecaster for LinearDirect {
    fn name(&self) -> &str {
        "linear_direct"
    }

    fn forecast(&self, batch: &WindowBatch) -> Result<Vec<f64>> {
        if batch.lookback != self.lookback || batch.horizon != self.horizon {
            return Err(BaselineError::ShapeMismatch(format!(
                "batch {}→{} vs fitted {}→{}",
                batch.lookback, batch.horizon, self.lookback, self.horizon
            )));
        }
        let (ti, to) = (self.lookback * NUM_VARIABLES, self.horizon * NUM_VARIABLES);
        let rows = batch.batch * batch.stations;
        let mut out = vec![0.0; rows * to];
        for r in 0..rows {
            self.forecast_row(&batch.inputs[r * ti..(r + 1) * ti], &mut out[r * to..(r + 1) * to]);
        }
        Ok(out)
    }

    fn num_parameters(&self) -> usize {
        self.blocks.iter().map(|b| b.weights.len() + b.bias.len()).sum()
    }
}

impl Forecaster for PhysicsFormer {
    fn name(&self) -> &str {
        "physicsformer"
    }

    fn forecast(&self, batch: &WindowBatch) -> Result<Vec<f64>> {
        Ok(self.predict(batch)?)
    }

    fn num_parameters(&self) -> usize {
        PhysicsFormer::num_parameters(self)
    }
}
