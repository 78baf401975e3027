//! Run configuration: one versioned JSON document with a section per stage.
//! Every field has a default and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{SplitMode, StatsPreset, WindowSpec};
use crate::error::{Error, Result};
use crate::ingest::{default_schema, QualityPolicy, VariableCodec};
use crate::metrics::EvalConfig;
use crate::model::{DynamicCoreMode, ModelConfig, TrainConfig};
use crate::qc::{OutlierPolicy, QcConfig, DEFAULT_MAX_GAP_HOURS, DEFAULT_WINDOW_MINUTES};
use crate::NUM_VARIABLES;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub ingest: IngestSection,
    pub qc: QcSection,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            ingest: IngestSection::default(),
            qc: QcSection::default(),
            dataset: DatasetSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// Raw archive read by `ingest` when no path is given on the command line.
    pub archive: Option<PathBuf>,
    /// First hour of the station grid (`YYYY-MM-DDTHH:MM:SS`, UTC); derived
    /// from the data when absent.
    pub start: Option<String>,
    /// Grid length in hours; derived from the data when absent.
    pub hours: Option<usize>,
    pub schema: Vec<VariableCodec>,
    pub quality: QualityPolicy,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            archive: None,
            start: None,
            hours: None,
            schema: default_schema(),
            quality: QualityPolicy::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapFillerKind {
    /// The station's own hour-of-day / month climatology.
    #[default]
    Climatology,
    /// Station CSVs in `gap_fill_dir`, climatology where they have no value.
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcSection {
    pub window_minutes: i64,
    pub max_gap_hours: usize,
    /// Stations need strictly more than this observed fraction.
    pub completeness_threshold: f64,
    pub outliers: OutlierPolicy,
    pub gap_filler: GapFillerKind,
    pub gap_fill_dir: Option<PathBuf>,
}

impl Default for QcSection {
    fn default() -> Self {
        QcSection {
            window_minutes: DEFAULT_WINDOW_MINUTES,
            max_gap_hours: DEFAULT_MAX_GAP_HOURS,
            completeness_threshold: 0.90,
            outliers: OutlierPolicy::default(),
            gap_filler: GapFillerKind::Climatology,
            gap_fill_dir: None,
        }
    }
}

impl QcSection {
    pub fn qc_config(&self) -> QcConfig {
        QcConfig {
            window_minutes: self.window_minutes,
            max_gap_hours: self.max_gap_hours,
            completeness_threshold: self.completeness_threshold,
            outliers: self.outliers.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub split: SplitMode,
    pub stats: StatsPreset,
    /// Input hours per window (`T`).
    pub lookback: usize,
    /// Forecast hours per window (`τ`).
    pub horizon: usize,
    pub stride: usize,
    pub batch_size: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            split: SplitMode::Auto,
            stats: StatsPreset::Computed,
            lookback: 48,
            horizon: 24,
            stride: 1,
            batch_size: 16,
        }
    }
}

impl DatasetSection {
    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            lookback: self.lookback,
            horizon: self.horizon,
            stride: self.stride,
            batch_size: self.batch_size,
        }
    }
}

/// Architecture and loss weights. Window lengths come from the dataset
/// section and the seed from the train section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub decoder_history: usize,
    pub geo_bands: usize,
    pub time_bands: usize,
    pub lambda_pw: f64,
    pub lambda_smooth: f64,
    pub dropout: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            embed_dim: m.embed_dim,
            encoder_layers: m.encoder_layers,
            decoder_layers: m.decoder_layers,
            heads: m.heads,
            ff_dim: m.ff_dim,
            decoder_history: m.decoder_history,
            geo_bands: m.geo_bands,
            time_bands: m.time_bands,
            lambda_pw: m.lambda_pw,
            lambda_smooth: m.lambda_smooth,
            dropout: m.dropout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: u64,
    pub learning_rate: f64,
    pub eval_every: u64,
    pub patience: usize,
    pub max_eval_windows: usize,
    pub dynamic_core: DynamicCoreMode,
    /// Euler step of the dynamic core, hours.
    pub dt: f64,
    /// Seeds parameter init, window order and dropout.
    pub seed: u64,
    /// Where `train` writes the model; `<out-dir>/model` when absent.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            iterations: t.iterations,
            learning_rate: t.learning_rate,
            eval_every: t.eval_every,
            patience: t.patience,
            max_eval_windows: t.max_eval_windows,
            dynamic_core: t.dynamic_core,
            dt: t.dt,
            seed: t.seed,
            checkpoint_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(0.0..1.0).contains(&self.qc.completeness_threshold) {
            return Err(Error::Config("qc.completeness_threshold must lie in [0, 1)".into()));
        }
        if self.qc.window_minutes <= 0 || self.qc.window_minutes > 30 {
            return Err(Error::Config("qc.window_minutes must lie in 1..=30".into()));
        }
        if self.qc.gap_filler == GapFillerKind::Table && self.qc.gap_fill_dir.is_none() {
            return Err(Error::Config("qc.gap_filler = table needs qc.gap_fill_dir".into()));
        }
        let d = &self.dataset;
        if d.stride == 0 || d.batch_size == 0 {
            return Err(Error::Config("dataset.stride and dataset.batch_size must be positive".into()));
        }
        if self.train.eval_every == 0 {
            return Err(Error::Config("train.eval_every must be positive".into()));
        }
        if self.ingest.schema.len() != NUM_VARIABLES {
            return Err(Error::Config(format!("ingest.schema needs {NUM_VARIABLES} codecs")));
        }
        for codec in &self.ingest.schema {
            codec.validate()?;
        }
        self.model_config().validate()?;
        self.eval.validate()?;
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            embed_dim: m.embed_dim,
            encoder_layers: m.encoder_layers,
            decoder_layers: m.decoder_layers,
            heads: m.heads,
            ff_dim: m.ff_dim,
            decoder_history: m.decoder_history,
            geo_bands: m.geo_bands,
            time_bands: m.time_bands,
            lookback: self.dataset.lookback,
            horizon: self.dataset.horizon,
            num_variables: NUM_VARIABLES,
            lambda_pw: m.lambda_pw,
            lambda_smooth: m.lambda_smooth,
            dropout: m.dropout,
            seed: self.train.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            iterations: t.iterations,
            learning_rate: t.learning_rate,
            batch_size: self.dataset.batch_size,
            stride: self.dataset.stride,
            eval_every: t.eval_every,
            patience: t.patience,
            max_eval_windows: t.max_eval_windows,
            dynamic_core: t.dynamic_core,
            dt: t.dt,
            seed: t.seed,
        }
    }

    /// Every leaf key of the default config with its default value, as
    /// dotted paths. Arrays of scalars stay whole; arrays of objects are
    /// listed by index.
    pub fn documented_keys() -> Vec<(String, String)> {
        fn walk(prefix: &str, value: &serde_json::Value, out: &mut Vec<(String, String)>) {
            match value {
                serde_json::Value::Object(map) => {
                    for (k, v) in map {
                        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        walk(&key, v, out);
                    }
                }
                serde_json::Value::Array(items) if items.iter().any(|i| i.is_object()) => {
                    for (i, v) in items.iter().enumerate() {
                        walk(&format!("{prefix}[{i}]"), v, out);
                    }
                }
                leaf => out.push((prefix.to_string(), leaf.to_string())),
            }
        }
        let mut out = Vec::new();
        walk("", &serde_json::to_value(RunConfig::default()).expect("config serializes"), &mut out);
        out
    }
}
