use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::autodiff::{ParameterStore, Shape, Tensor};
use crate::embeddings::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{Model, OutputSpace};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Where a run stands; enough to continue it exactly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub epochs_completed: usize,
    pub epoch_fraction: f64,
    pub best_dev: Option<f64>,
    pub bad_epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub progress: Progress,
    pub vocab: Vocabulary,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn capture(model: &Model, config: &TrainConfig, progress: &Progress) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            progress: progress.clone(),
            vocab: model.vocab.clone(),
            params: model
                .store
                .iter()
                .map(|(_, e)| ParamRecord {
                    name: e.name.clone(),
                    shape: e.tensor.shape.0.clone(),
                    trainable: e.trainable,
                    values: e.tensor.value.clone(),
                })
                .collect(),
        }
    }

    pub fn store(&self) -> Result<ParameterStore> {
        let mut store = ParameterStore::new();
        for p in &self.params {
            let shape = Shape(p.shape.clone());
            if shape.numel() != p.values.len() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` declares shape {shape} but has {} values",
                    p.name,
                    p.values.len()
                )));
            }
            store.insert(&p.name, Tensor::new(shape, p.values.clone()), p.trainable)?;
        }
        Ok(store)
    }

    /// Rebuilds the model; `output` is required for the reverse dictionary.
    pub fn model(&self, output: Option<OutputSpace>) -> Result<Model> {
        let c = &self.config;
        Model::from_store(c.task, c.encoder, self.vocab.clone(), self.store()?, c.din, c.dout, output)
    }

    /// Temperature reached by the end of the saved run.
    pub fn temperature(&self) -> Result<f64> {
        self.config.temperature(self.progress.epoch_fraction)
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(checkpoint).map_err(|e| Error::Checkpoint(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    // Check the version before the full structure so old files fail clearly.
    #[derive(Deserialize)]
    struct Header {
        version: u32,
    }
    let parse_err = |e: serde_json::Error| Error::CheckpointParse {
        offset: byte_offset(text, e.line(), e.column()),
        msg: e.to_string(),
    };
    if let Ok(h) = serde_json::from_str::<Header>(text) {
        if h.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_VERSION})",
                h.version
            )));
        }
    }
    let ck: Checkpoint = serde_json::from_str(text).map_err(parse_err)?;
    ck.store()?;
    Ok(ck)
}
