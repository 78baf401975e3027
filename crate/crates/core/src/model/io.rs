//! Model directory: binary weights plus a JSON card.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, PhysicsFormer, Result};
use crate::autodiff::{read_checkpoint, write_checkpoint};
use crate::dataset::Standardizer;
use crate::dynamics::DynamicCoreParams;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const MODEL_CARD_FILE: &str = "model.json";
pub const LOSS_CURVE_FILE: &str = "loss_curve.csv";
pub const MODEL_CARD_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCard {
    pub schema_version: u32,
    pub config: ModelConfig,
    pub standardizer: Standardizer,
    pub station_ids: Vec<String>,
    pub parameter_count: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_model(model: &PhysicsFormer, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    let file = File::create(&ckpt).map_err(io_err(&ckpt))?;
    let dynamics = model.dynamics.to_entries();
    write_checkpoint(BufWriter::new(file), model.params.iter().chain(dynamics.iter()))?;
    let card = ModelCard {
        schema_version: MODEL_CARD_VERSION,
        config: model.config.clone(),
        standardizer: model.standardizer,
        station_ids: model.dynamics.station_ids.clone(),
        parameter_count: model.num_parameters(),
    };
    let path = dir.join(MODEL_CARD_FILE);
    let mut text = serde_json::to_string_pretty(&card)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<PhysicsFormer> {
    let path = dir.join(MODEL_CARD_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let card: ModelCard = serde_json::from_str(&text)?;
    if card.schema_version != MODEL_CARD_VERSION {
        return Err(ModelError::Config(format!(
            "model card version {} is not supported",
            card.schema_version
        )));
    }
    let ckpt = dir.join(CHECKPOINT_FILE);
    let file = File::open(&ckpt).map_err(io_err(&ckpt))?;
    let entries = read_checkpoint(BufReader::new(file))?;
    let dynamics = DynamicCoreParams::from_entries(&entries)?;
    if dynamics.station_ids != card.station_ids {
        return Err(ModelError::Config("checkpoint stations disagree with the model card".into()));
    }
    let mut model = PhysicsFormer::new(card.config, dynamics, card.standardizer)?;
    model.params.load_from(&entries)?;
    Ok(model)
}
