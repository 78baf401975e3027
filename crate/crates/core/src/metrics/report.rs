use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scores::{mae_mse, sedi, sedi_levels, AngleMode, LeadBucket, SediCounts};
use super::{ForecastSet, MetricsError, Result};
use crate::baselines::Forecaster;
use crate::dataset::{ClimateStats, LOWER_LEVELS_PERMILLE, UPPER_LEVELS_PERMILLE};
use crate::parallel::Execution;
use crate::Variable;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Bytes held per trainable scalar during training: value, gradient and two
/// Adam moments.
const TRAIN_BYTES_PER_PARAMETER: u64 = 4 * 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Prediction lengths in hours; each bucket covers leads `1..=h`.
    pub lead_buckets: Vec<usize>,
    /// Upper percentile levels in percent; each pairs with `100 − p`.
    pub sedi_levels: Vec<f64>,
    pub angle_mode: AngleMode,
    /// Batch size used when running a forecaster over evaluation windows.
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            lead_buckets: vec![24, 72, 120, 168],
            sedi_levels: vec![90.0, 95.0, 98.0, 99.5],
            angle_mode: AngleMode::Circular,
            batch_size: 32,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(&b) = self.lead_buckets.iter().find(|&&b| b == 0) {
            return Err(MetricsError::EmptyBucket(b.to_string()));
        }
        for &p in &self.sedi_levels {
            sedi_levels(p)?;
        }
        Ok(())
    }

    /// Configured buckets that fit `horizon`, or the whole horizon when none do.
    pub fn buckets_for(&self, horizon: usize) -> Vec<usize> {
        let fit: Vec<usize> = self.lead_buckets.iter().copied().filter(|&b| b <= horizon).collect();
        if fit.is_empty() {
            vec![horizon]
        } else {
            fit
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub parameters: usize,
    pub parameters_millions: f64,
    /// Training-time footprint of parameters, gradients and optimizer state.
    pub memory_bytes_estimate: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inference_seconds_per_batch: Option<f64>,
}

impl ComplexityReport {
    pub fn from_count(parameters: usize) -> Self {
        ComplexityReport {
            parameters,
            parameters_millions: parameters as f64 / 1e6,
            memory_bytes_estimate: parameters as u64 * TRAIN_BYTES_PER_PARAMETER,
            train_seconds: None,
            inference_seconds_per_batch: None,
        }
    }
}

pub fn complexity_report(forecaster: &dyn Forecaster) -> ComplexityReport {
    ComplexityReport::from_count(forecaster.num_parameters())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableErrors {
    pub variable: Variable,
    pub mae: f64,
    pub mse: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketErrors {
    pub lead_hours: usize,
    pub variables: Vec<VariableErrors>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SediEntry {
    pub variable: Variable,
    pub lower_percent: f64,
    pub upper_percent: f64,
    /// `None` when no extremes were observed.
    pub value: Option<f64>,
    pub counts: SediCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub model: String,
    pub samples: usize,
    pub stations: usize,
    pub horizon: usize,
    pub angle_mode: AngleMode,
    pub errors: Vec<BucketErrors>,
    pub sedi: Vec<SediEntry>,
    pub complexity: ComplexityReport,
}

pub fn evaluate(
    set: &ForecastSet,
    stats: &ClimateStats,
    cfg: &EvalConfig,
    model: &str,
    complexity: ComplexityReport,
    exec: Execution,
) -> Result<MetricReport> {
    cfg.validate()?;
    let mut errors = Vec::new();
    for hours in cfg.buckets_for(set.horizon) {
        let stats = mae_mse(set, LeadBucket::cumulative(hours), cfg.angle_mode, exec)?;
        errors.push(BucketErrors {
            lead_hours: hours,
            variables: set
                .variables
                .iter()
                .zip(stats)
                .map(|(&variable, s)| VariableErrors {
                    variable,
                    mae: s.mae,
                    mse: s.mse,
                    count: s.count,
                })
                .collect(),
        });
    }
    let mut levels: Vec<usize> = cfg.sedi_levels.iter().map(|&p| sedi_levels(p)).collect::<Result<_>>()?;
    levels.sort_unstable();
    levels.dedup();
    let mut entries = Vec::new();
    for level in levels {
        for (&variable, counts) in set.variables.iter().zip(sedi(set, stats, level, exec)?) {
            entries.push(SediEntry {
                variable,
                lower_percent: LOWER_LEVELS_PERMILLE[LOWER_LEVELS_PERMILLE.len() - 1 - level] as f64 / 10.0,
                upper_percent: UPPER_LEVELS_PERMILLE[level] as f64 / 10.0,
                value: counts.value(),
                counts,
            });
        }
    }
    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model: model.to_string(),
        samples: set.samples,
        stations: set.num_stations(),
        horizon: set.horizon,
        angle_mode: cfg.angle_mode,
        errors,
        sedi: entries,
        complexity,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| MetricsError::io(path, e))
}

/// Variables of the benchmark error table, in column order.
const PAPER_ERROR_VARIABLES: [Variable; 4] = [
    Variable::Temperature,
    Variable::Dewpoint,
    Variable::WindRate,
    Variable::SeaLevelPressure,
];
/// Upper levels shown in the extreme-event table.
const PAPER_SEDI_LEVELS: [f64; 2] = [99.5, 90.0];

fn fmt_level(p: f64) -> String {
    format!("{p}")
}

impl MetricReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &(serde_json::to_string_pretty(self)? + "\n"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MetricsError::io(path, e))?;
        let report: MetricReport = serde_json::from_str(&text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(MetricsError::SchemaMismatch(format!(
                "report schema {} (expected {REPORT_SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }

    /// Mean over lead buckets, the aggregation used for benchmark rows.
    pub fn bucket_mean(&self, var: Variable) -> Option<(f64, f64)> {
        let cells: Vec<&VariableErrors> = self
            .errors
            .iter()
            .filter_map(|b| b.variables.iter().find(|e| e.variable == var))
            .collect();
        if cells.is_empty() {
            return None;
        }
        let n = cells.len() as f64;
        Some((cells.iter().map(|e| e.mae).sum::<f64>() / n, cells.iter().map(|e| e.mse).sum::<f64>() / n))
    }

    pub fn sedi_value(&self, var: Variable, upper_percent: f64) -> Option<f64> {
        self.sedi
            .iter()
            .find(|e| e.variable == var && (e.upper_percent - upper_percent).abs() < 1e-9)
            .and_then(|e| e.value)
    }

    /// Long-format CSV; undefined SEDI cells have an empty value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,metric,variable,lead_hours,percentile,value,count\n");
        for bucket in &self.errors {
            for e in &bucket.variables {
                for (metric, value) in [("mae", e.mae), ("mse", e.mse)] {
                    let _ = writeln!(
                        out,
                        "{},{metric},{},{},,{value},{}",
                        self.model, e.variable, bucket.lead_hours, e.count
                    );
                }
            }
        }
        for e in &self.sedi {
            let value = e.value.map(|v| v.to_string()).unwrap_or_default();
            let events = e.counts.observed_lower + e.counts.observed_upper;
            let _ = writeln!(
                out,
                "{},sedi,{},{},{},{value},{events}",
                self.model,
                e.variable,
                self.horizon,
                fmt_level(e.upper_percent)
            );
        }
        let _ = writeln!(out, "{},parameters,,,,{},", self.model, self.complexity.parameters);
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }

    /// Plain-text tables: variables by {MAE, MSE} per bucket, then SEDI.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "model: {}  samples: {}  stations: {}  horizon: {} h  angle mode: {:?}\n",
            self.model, self.samples, self.stations, self.horizon, self.angle_mode
        );
        for bucket in &self.errors {
            let _ = writeln!(out, "\nlead 1-{} h", bucket.lead_hours);
            let _ = writeln!(out, "{:<20} {:>12} {:>12}", "variable", "MAE", "MSE");
            for e in &bucket.variables {
                let _ = writeln!(out, "{:<20} {:>12.4} {:>12.4}", e.variable.label(), e.mae, e.mse);
            }
        }
        if !self.sedi.is_empty() {
            let mut levels: Vec<f64> = self.sedi.iter().map(|e| e.upper_percent).collect();
            levels.dedup();
            let _ = write!(out, "\nSEDI (%)\n{:<20}", "variable");
            for p in &levels {
                let _ = write!(out, " {:>10}", format!("{}th", fmt_level(*p)));
            }
            out.push('\n');
            for var in Variable::ALL {
                if !self.sedi.iter().any(|e| e.variable == var) {
                    continue;
                }
                let _ = write!(out, "{:<20}", var.label());
                for &p in &levels {
                    let _ = write!(out, " {:>10}", percent(self.sedi_value(var, p)));
                }
                out.push('\n');
            }
        }
        let _ = writeln!(
            out,
            "\nparameters: {} ({:.4} M)",
            self.complexity.parameters, self.complexity.parameters_millions
        );
        out
    }

    pub fn write_table(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_table())
    }
}

fn percent(value: Option<f64>) -> String {
    value.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}", 100.0 * v))
}

/// Benchmark layout: one row per method with {MAE, MSE} averaged over lead
/// buckets for temperature, dewpoint, wind rate and sea level pressure,
/// followed by the extreme-event table at the 99.5th and 90th levels.
pub fn paper_table(reports: &[&MetricReport]) -> String {
    let method_width = reports.iter().map(|r| r.model.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = write!(out, "{:<method_width$}", "Method");
    for var in PAPER_ERROR_VARIABLES {
        let _ = write!(out, " | {:^19}", var.label());
    }
    let _ = write!(out, "\n{:<method_width$}", "");
    for _ in PAPER_ERROR_VARIABLES {
        let _ = write!(out, " | {:>9} {:>9}", "MAE", "MSE");
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<method_width$}", r.model);
        for var in PAPER_ERROR_VARIABLES {
            match r.bucket_mean(var) {
                Some((mae, mse)) => {
                    let _ = write!(out, " | {mae:>9.2} {mse:>9.2}");
                }
                None => {
                    let _ = write!(out, " | {:>9} {:>9}", "n/a", "n/a");
                }
            }
        }
        out.push('\n');
    }
    let _ = write!(out, "\nSEDI (%)\n{:<method_width$}", "Method");
    for var in Variable::ALL {
        let _ = write!(out, " | {:^19}", var.label());
    }
    let _ = write!(out, "\n{:<method_width$}", "");
    for _ in Variable::ALL {
        let _ = write!(out, " |");
        for p in PAPER_SEDI_LEVELS {
            let _ = write!(out, " {:>9}", format!("{}th", fmt_level(p)));
        }
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<method_width$}", r.model);
        for var in Variable::ALL {
            let _ = write!(out, " |");
            for p in PAPER_SEDI_LEVELS {
                let _ = write!(out, " {:>9}", percent(r.sedi_value(var, p)));
            }
        }
        out.push('\n');
    }
    out
}
