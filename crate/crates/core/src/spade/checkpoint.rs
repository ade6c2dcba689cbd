//! Checkpoint directory layout:
//!
//! ```text
//! checkpoint.json              step, seed, model and training configuration
//! generator.safetensors        condition model + generator parameters
//! discriminator.safetensors
//! optimizer.safetensors        Adam moments, keys `g.m.<param>`, `d.v.<param>`, ...
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use super::{TrafficModel, TrainState};
use crate::config::{ModelConfig, TrainConfig};
use crate::error::{Error, Result};

const META: &str = "checkpoint.json";
const GENERATOR: &str = "generator.safetensors";
const DISCRIMINATOR: &str = "discriminator.safetensors";
const OPTIMIZER: &str = "optimizer.safetensors";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub step: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

pub fn save_checkpoint(state: &TrainState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    state.model.params.save(&dir.join(GENERATOR))?;
    state.disc_params.save(&dir.join(DISCRIMINATOR))?;
    let mut opt: HashMap<String, Tensor> = HashMap::new();
    for (prefix, adam) in [("g", &state.opt_g), ("d", &state.opt_d)] {
        for (k, v) in adam.state_tensors() {
            opt.insert(format!("{prefix}.{k}"), v);
        }
    }
    let opt_path = dir.join(OPTIMIZER);
    candle_core::safetensors::save(&opt, &opt_path).map_err(|e| Error::format(&opt_path, e.to_string()))?;
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        step: state.step,
        model: state.model.config.clone(),
        train: state.train.clone(),
    };
    let path = dir.join(META);
    fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))
}

fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    let path = dir.join(META);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &path,
            format!("unsupported checkpoint version {}", meta.format_version),
        ));
    }
    meta.model
        .validate()
        .map_err(|e| Error::format(&path, e.to_string()))?;
    Ok(meta)
}

/// Restores a full training state, optimizer moments included.
pub fn load_checkpoint(dir: &Path) -> Result<TrainState> {
    let meta = read_meta(dir)?;
    let mut state = TrainState::new(&meta.model, &meta.train)?;
    state.model.params.load(&dir.join(GENERATOR))?;
    state.disc_params.load(&dir.join(DISCRIMINATOR))?;
    let opt_path = dir.join(OPTIMIZER);
    let all = candle_core::safetensors::load(&opt_path, &Device::Cpu)
        .map_err(|e| Error::format(&opt_path, e.to_string()))?;
    for (prefix, adam) in [("g.", &mut state.opt_g), ("d.", &mut state.opt_d)] {
        let part: HashMap<String, Tensor> = all
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|k| (k.to_string(), v.clone())))
            .collect();
        adam.restore(meta.step, &part, &opt_path)?;
    }
    state.step = meta.step;
    Ok(state)
}

/// Loads only what inference needs: configuration and generator-side parameters.
pub fn load_model(dir: &Path) -> Result<(TrafficModel, CheckpointMeta)> {
    let meta = read_meta(dir)?;
    let model = TrafficModel::new(&meta.model, meta.train.seed)?;
    model.params.load(&dir.join(GENERATOR))?;
    Ok((model, meta))
}
