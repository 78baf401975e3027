//! `stationcast` command-line entry point.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use stationcast::config::RunConfig;
use stationcast::synth::Preset;

#[derive(Debug, Parser)]
#[command(name = "stationcast", version, about = "Station weather forecasting: ingest, QC, train, verify")]
pub struct Cli {
    /// Run configuration (JSON). Defaults apply to every key not given.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `train.seed` (parameter init, window order, dropout, synth).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Root directory for every artifact.
    #[arg(long, global = true, value_name = "DIR", default_value = "stationcast-out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode a raw station archive and align it to the hourly grid
    /// (writes <out>/aligned and <out>/ingest_report.json).
    Ingest {
        /// Archive of `#STATION,id,lat,lon[,elev]` blocks; defaults to `ingest.archive`.
        archive: Option<PathBuf>,
    },
    /// Completeness filter, outlier screen, interpolation and gap fill
    /// (writes <out>/clean and <out>/qc_report.json).
    Qc {
        /// Catalog or directory of station CSVs [default: <out>/aligned].
        input: Option<PathBuf>,
    },
    /// Standardization statistics and percentile thresholds on the training
    /// split (writes <out>/stats.json).
    Stats(DataArg),
    /// Train the model (writes <out>/model or `train.checkpoint_dir`).
    Train(DataArg),
    /// Forecast every complete window of a split and write a forecast file
    /// (<out>/forecasts/<name>.csv).
    Predict(PredictArgs),
    /// Score forecasts (writes <out>/reports/<name>.{json,csv,txt}).
    Evaluate(EvaluateArgs),
    /// Render forecast and loss-curve charts as SVG (<out>/plots).
    Plot(PlotArgs),
    /// Generate a synthetic clean dataset (writes <out>/clean).
    Synth(SynthArgs),
    /// Print the fully defaulted configuration.
    Config,
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Catalog or directory of station CSVs [default: <out>/clean].
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArg,
    /// Trained model directory [default: <out>/model].
    #[arg(long, value_name = "DIR", conflicts_with = "baseline")]
    pub model: Option<PathBuf>,
    /// Use a reference forecaster: persistence, climatology or linear.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Split to forecast: train, val or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Output file [default: <out>/forecasts/<name>.csv].
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Forecast files; when none are given the model in <out>/model is run
    /// on the test split.
    pub forecasts: Vec<PathBuf>,
    #[command(flatten)]
    pub data: DataArg,
    /// Statistics with percentile thresholds [default: <out>/stats.json,
    /// computed when absent].
    #[arg(long, value_name = "PATH")]
    pub stats: Option<PathBuf>,
    /// Also print the benchmark-style table of all evaluated forecasts.
    #[arg(long)]
    pub paper_table: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Forecast file to chart, one SVG per station.
    #[arg(long, value_name = "PATH")]
    pub forecast: Option<PathBuf>,
    /// Sample (window) index charted from the forecast file.
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    /// Loss curve CSV written by `train`.
    #[arg(long, value_name = "PATH")]
    pub loss_curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// sine, ar1 or dynamic.
    #[arg(long, default_value = "sine", value_parser = parse_preset)]
    pub preset: Preset,
    #[arg(long, default_value_t = 2)]
    pub stations: usize,
    #[arg(long, default_value_t = 500)]
    pub hours: usize,
    /// Observation noise as a multiple of each variable's diurnal amplitude.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Also write a raw, jittered archive for `ingest` to this path.
    #[arg(long, value_name = "PATH")]
    pub raw: Option<PathBuf>,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse()
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration: exit 2.
    Usage(String),
    /// Data or runtime failure: exit 1.
    Data(stationcast::Error),
}

impl From<stationcast::Error> for CliError {
    fn from(e: stationcast::Error) -> Self {
        match e {
            stationcast::Error::Config(m) => CliError::Usage(m),
            other => CliError::Data(other),
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.into())
            }
        }
    )*};
}

data_error!(
    stationcast::ingest::IngestError,
    stationcast::qc::QcError,
    stationcast::dataset::DatasetError,
    stationcast::dynamics::DynamicsError,
    stationcast::model::ModelError,
    stationcast::baselines::BaselineError,
    stationcast::metrics::MetricsError
);

impl CliError {
    fn report(&self) -> (u8, String) {
        let (code, kind, message) = match self {
            CliError::Usage(m) => (2, "UsageError", m.clone()),
            CliError::Data(e) => (1, e.kind(), e.to_string()),
        };
        let json = serde_json::json!({ "error": kind, "message": message, "exit_code": code });
        (code, json.to_string())
    }
}

fn config_help() -> &'static str {
    static TEXT: OnceLock<String> = OnceLock::new();
    TEXT.get_or_init(|| {
        let mut text = String::from("Configuration keys and defaults (--config file, JSON):\n");
        for (key, value) in RunConfig::documented_keys() {
            text += &format!("  {key} = {value}\n");
        }
        text
    })
}

fn main() -> ExitCode {
    let command = Cli::command().after_long_help(config_help());
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            // help and version go to stdout with exit 0
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, json) = e.report();
            eprintln!("{json}");
            ExitCode::from(code)
        }
    }
}
