//! Verification of forecasts in physical units: MAE/MSE per lead bucket,
//! SEDI at paired percentile levels, and model complexity.

mod file;
mod report;
mod scores;

use std::path::PathBuf;

use thiserror::Error;

use crate::baselines::{BaselineError, Forecaster};
use crate::dataset::{complete_starts, Standardizer, WindowIter};
use crate::parallel::Execution;
use crate::{Variable, NUM_VARIABLES};

pub use file::{read_forecast_file, read_forecasts, write_forecast_file, write_forecasts, FORECAST_SCHEMA};
pub use report::{
    complexity_report, evaluate, paper_table, BucketErrors, ComplexityReport, EvalConfig, MetricReport, SediEntry, VariableErrors,
    REPORT_SCHEMA_VERSION,
};
pub use scores::{mae_mse, sedi, sedi_levels, AngleMode, ErrorStats, LeadBucket, SediCounts};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("lead bucket {0} holds no cells")]
    EmptyBucket(String),
    #[error("lead bucket {bucket} reaches past the forecast horizon {horizon}")]
    BucketBeyondHorizon { bucket: usize, horizon: usize },
    #[error("forecast schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("line {line}: {message}")]
    ValueParse { line: usize, message: String },
    #[error("non-finite {what} at cell {cell}")]
    NonFinite { what: &'static str, cell: usize },
    #[error("no percentile thresholds for station `{0}`")]
    MissingThresholds(String),
    #[error("unsupported percentile level {0}")]
    UnsupportedLevel(f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Forecaster(#[from] BaselineError),
}

impl MetricsError {
    pub fn kind(&self) -> &'static str {
        match self {
            MetricsError::EmptyBucket(_) => "EmptyBucket",
            MetricsError::BucketBeyondHorizon { .. } => "BucketBeyondHorizon",
            MetricsError::SchemaMismatch(_) => "SchemaMismatch",
            MetricsError::ValueParse { .. } => "ValueParse",
            MetricsError::NonFinite { .. } => "NonFinite",
            MetricsError::MissingThresholds(_) => "MissingThresholds",
            MetricsError::UnsupportedLevel(_) => "UnsupportedLevel",
            MetricsError::Io { .. } => "Io",
            MetricsError::Json(_) => "Json",
            MetricsError::Forecaster(e) => e.kind(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MetricsError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Paired forecasts and observations, `(samples, N, τ, V)` row-major, in
/// physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastSet {
    pub samples: usize,
    pub horizon: usize,
    pub station_ids: Vec<String>,
    pub variables: Vec<Variable>,
    pub predictions: Vec<f64>,
    pub targets: Vec<f64>,
    /// Name of the forecaster that produced the predictions.
    pub model: Option<String>,
    /// Its trainable parameter count.
    pub parameters: Option<usize>,
}

impl ForecastSet {
    pub fn new(
        station_ids: Vec<String>,
        horizon: usize,
        variables: Vec<Variable>,
        predictions: Vec<f64>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        let row = station_ids.len() * horizon * variables.len();
        if row == 0 {
            return Err(MetricsError::SchemaMismatch("empty station, lead or variable axis".into()));
        }
        if predictions.len() != targets.len() || !predictions.len().is_multiple_of(row) {
            return Err(MetricsError::SchemaMismatch(format!(
                "{} predictions and {} targets for rows of {row} cells",
                predictions.len(),
                targets.len()
            )));
        }
        for (what, values) in [("prediction", &predictions), ("target", &targets)] {
            if let Some(cell) = values.iter().position(|x| !x.is_finite()) {
                return Err(MetricsError::NonFinite { what, cell });
            }
        }
        Ok(ForecastSet {
            samples: predictions.len() / row,
            horizon,
            station_ids,
            variables,
            predictions,
            targets,
            model: None,
            parameters: None,
        })
    }

    /// Tag the set with its producer. Whitespace and `=` in the name become `_`.
    pub fn with_source(mut self, model: &str, parameters: usize) -> Self {
        let clean = model.chars().map(|c| if c.is_whitespace() || c == '=' { '_' } else { c }).collect();
        self.model = Some(clean);
        self.parameters = Some(parameters);
        self
    }

    pub fn num_stations(&self) -> usize {
        self.station_ids.len()
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    #[inline]
    pub fn index(&self, sample: usize, station: usize, lead: usize, var: usize) -> usize {
        ((sample * self.num_stations() + station) * self.horizon + lead) * self.num_variables() + var
    }
}

/// Runs `forecaster` over every complete window of `iter` and returns the
/// de-standardized forecasts beside the de-standardized targets.
pub fn collect_forecasts(
    forecaster: &dyn Forecaster,
    iter: &WindowIter,
    standardizer: &Standardizer,
    station_ids: Vec<String>,
    batch_size: usize,
    exec: Execution,
) -> Result<ForecastSet> {
    let starts = complete_starts(iter);
    if starts.is_empty() {
        return Err(MetricsError::SchemaMismatch("no complete windows to evaluate".into()));
    }
    let chunks: Vec<&[usize]> = starts.chunks(batch_size.max(1)).collect();
    let parts = exec.map(&chunks, |chunk| -> Result<(Vec<f64>, Vec<f64>)> {
        let batch = iter.batch_for(chunk);
        let mut pred = forecaster.forecast(&batch)?;
        let mut target = batch.targets;
        if pred.len() != target.len() {
            return Err(MetricsError::SchemaMismatch(format!(
                "forecaster returned {} values for {} targets",
                pred.len(),
                target.len()
            )));
        }
        standardizer.destandardize(&mut pred);
        standardizer.destandardize(&mut target);
        Ok((pred, target))
    });
    let (mut predictions, mut targets) = (Vec::new(), Vec::new());
    for part in parts {
        let (p, t) = part?;
        predictions.extend(p);
        targets.extend(t);
    }
    let horizon = predictions.len() / (starts.len() * station_ids.len() * NUM_VARIABLES);
    Ok(ForecastSet::new(station_ids, horizon, Variable::ALL.to_vec(), predictions, targets)?
        .with_source(forecaster.name(), forecaster.num_parameters()))
}
