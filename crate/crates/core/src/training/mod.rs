//! Minibatch SGD with temperature annealing, dev-based early stopping and
//! checkpointing.

mod checkpoint;

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, Checkpoint, ParamRecord, Progress, CHECKPOINT_VERSION};

use crate::autodiff::{ParameterStore, Tape};
use crate::encoders::{temperature_schedule, EncoderKind};
use crate::error::{Error, Result};
use crate::model::{Dataset, Model, Task};

/// Temperature used when scoring the dev set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DevTemperature {
    /// The schedule's value at the end of the epoch.
    #[default]
    Current,
    /// The schedule's floor (near-discrete parses).
    Floor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub encoder: EncoderKind,
    pub din: usize,
    pub dout: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub total_epochs: usize,
    pub patience: usize,
    pub tfloor: f64,
    pub seed: u64,
    /// Global gradient-norm threshold; `None` disables clipping.
    pub clip: Option<f64>,
    #[serde(default)]
    pub dev_temperature: DevTemperature,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: Task::Entailment,
            encoder: EncoderKind::TreeUnsupervised,
            din: 100,
            dout: 100,
            lr: 0.1,
            batch_size: 16,
            total_epochs: 10,
            patience: 5,
            tfloor: 0.005,
            seed: 0,
            clip: Some(5.0),
            dev_temperature: DevTemperature::Current,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            // lr = 0 is allowed as a no-op run.
            if self.lr != 0.0 {
                return bad(format!("learning rate must be positive, got {}", self.lr));
            }
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.total_epochs == 0 {
            return bad("total epochs must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if !(self.tfloor >= 0.0) {
            return bad(format!("temperature floor must be non-negative, got {}", self.tfloor));
        }
        if self.din == 0 || self.dout == 0 {
            return bad("dimensions must be positive".into());
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return bad(format!("clip threshold must be positive, got {c}"));
            }
        }
        Ok(())
    }

    pub fn temperature(&self, epoch_fraction: f64) -> Result<f64> {
        temperature_schedule(epoch_fraction, self.tfloor)
    }

    /// Temperature for dev scoring after reaching `epoch_fraction`.
    pub fn dev_temperature(&self, epoch_fraction: f64) -> Result<f64> {
        match self.dev_temperature {
            DevTemperature::Current => self.temperature(epoch_fraction),
            DevTemperature::Floor if self.tfloor > 0.0 => Ok(self.tfloor),
            DevTemperature::Floor => self.temperature(epoch_fraction),
        }
    }

    fn higher_is_better(&self) -> bool {
        self.task == Task::Entailment
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub dev: f64,
    /// Training temperature at the end of the epoch (1 for encoders that
    /// ignore it).
    pub t: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} loss={:.6} dev={:.6} t={:.6}", self.epoch, self.loss, self.dev, self.t)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub history: Vec<EpochLog>,
    pub stopped_early: bool,
}

/// `p <- p - lr * grad` on every trainable entry, then zeroes all gradients.
/// A non-finite gradient aborts the step before anything is modified.
pub fn sgd_step(store: &mut ParameterStore, lr: f64) -> Result<()> {
    for (_, e) in store.iter() {
        if e.trainable && e.tensor.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient",
                param: e.name.clone(),
            });
        }
    }
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if !store.entry(id).trainable {
            continue;
        }
        let t = store.tensor_mut(id);
        for (p, g) in t.value.iter_mut().zip(&t.grad) {
            *p -= lr * g;
        }
    }
    store.zero_grad();
    Ok(())
}

/// Rescales gradients so their global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_gradients(store: &mut ParameterStore, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm.is_finite() && norm > max_norm {
        store.scale_grads(max_norm / norm);
    }
    norm
}

/// Example order for `epoch` (1-based), a pure function of `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn check_dataset(model: &Model, data: &Dataset, what: &str) -> Result<()> {
    let reject = |msg: String| Err(Error::Config(format!("{what} set: {msg}")));
    if data.is_empty() {
        return reject("empty".into());
    }
    if data.task() != model.task {
        return reject(format!("{} data given to a {} model", data.task(), model.task));
    }
    if model.encoder.kind().needs_tree() && !data.has_trees() {
        return reject("supervised encoder needs a parse tree for every sentence".into());
    }
    let v = model.vocab.len();
    let check_sentence = |i: usize, ids: &[usize], tree: Option<&crate::encoders::BinaryTree>| -> Result<()> {
        if ids.is_empty() {
            return Err(Error::Config(format!("{what} set: example {} has an empty sentence", i + 1)));
        }
        if let Some(&bad) = ids.iter().find(|&&w| w >= v) {
            return Err(Error::Config(format!(
                "{what} set: example {} uses word index {bad} outside a vocabulary of {v}",
                i + 1
            )));
        }
        if let Some(tree) = tree {
            tree.validate(ids.len())?;
        }
        Ok(())
    };
    match data {
        Dataset::Entailment(items) => {
            for (i, p) in items.iter().enumerate() {
                check_sentence(i, &p.premise, p.premise_tree.as_ref())?;
                check_sentence(i, &p.hypothesis, p.hypothesis_tree.as_ref())?;
            }
        }
        Dataset::RevDict(items) => {
            let rows = model.output.as_ref().map_or(0, |o| o.table.rows());
            for (i, d) in items.iter().enumerate() {
                check_sentence(i, &d.tokens, d.tree.as_ref())?;
                if d.target >= rows {
                    return reject(format!("example {} targets row {} of {rows}", i + 1, d.target));
                }
            }
        }
    }
    Ok(())
}

fn check_config(model: &Model, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if config.task != model.task
        || config.encoder != model.encoder.kind()
        || config.din != model.din
        || config.dout != model.dout
    {
        return Err(Error::Config(format!(
            "config ({} {} {}->{}) does not match model ({} {} {}->{})",
            config.task,
            config.encoder,
            config.din,
            config.dout,
            model.task,
            model.encoder.kind(),
            model.din,
            model.dout
        )));
    }
    Ok(())
}

/// Accuracy for entailment, median rank over the whole output table for the
/// reverse dictionary.
pub fn dev_metric(model: &Model, data: &Dataset, t: f64) -> Result<f64> {
    match data {
        Dataset::Entailment(items) => model.accuracy(items, t),
        Dataset::RevDict(items) => Ok(model.rank(items, None, t)?.median_rank),
    }
}

/// Runs forward/backward for one batch and merges gradients into the store,
/// averaged over the batch. Returns the per-example losses in batch order.
fn accumulate_batch(model: &mut Model, data: &Dataset, batch: &[usize], t: f64) -> Result<Vec<f64>> {
    let shared: &Model = model;
    let tapes = batch
        .par_iter()
        .map(|&i| {
            let mut tape = Tape::new();
            let loss = shared.example_loss(&mut tape, data, i, t)?;
            tape.backward(loss)?;
            Ok((tape.scalar(loss), tape))
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut losses = Vec::with_capacity(batch.len());
    for (loss, tape) in &tapes {
        tape.accumulate_into(&mut model.store, scale);
        losses.push(*loss);
    }
    Ok(losses)
}

/// Trains from scratch.
pub fn train(
    model: Model,
    config: &TrainConfig,
    train: &Dataset,
    dev: &Dataset,
    log: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    train_from(model, config, Progress::default(), train, dev, log)
}

/// Continues training from `progress`, e.g. as restored from a checkpoint.
/// Given the same data and config, the result matches an uninterrupted run.
pub fn train_from(
    mut model: Model,
    config: &TrainConfig,
    mut progress: Progress,
    train: &Dataset,
    dev: &Dataset,
    mut log: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    check_config(&model, config)?;
    check_dataset(&model, train, "training")?;
    check_dataset(&model, dev, "dev")?;
    model.store.zero_grad();

    let annealed = config.encoder == EncoderKind::TreeUnsupervised;
    let n = train.len();
    let mut best = None;
    let mut history = Vec::new();
    let mut stopped_early = false;

    while progress.epochs_completed < config.total_epochs {
        let epoch = progress.epochs_completed + 1;
        let order = epoch_order(config.seed, epoch, n);
        let mut loss_sum = 0.0;
        let mut done = 0;
        for batch in order.chunks(config.batch_size) {
            let t = config.temperature(progress.epoch_fraction)?;
            let losses = accumulate_batch(&mut model, train, batch, t)?;
            loss_sum += losses.iter().sum::<f64>();
            if let Some(c) = config.clip {
                clip_gradients(&mut model.store, c);
            }
            sgd_step(&mut model.store, config.lr)?;
            done += batch.len();
            progress.epoch_fraction = (epoch - 1) as f64 + done as f64 / n as f64;
        }
        progress.epoch_fraction = epoch as f64;
        progress.epochs_completed = epoch;

        let dev_value = dev_metric(&model, dev, config.dev_temperature(progress.epoch_fraction)?)?;
        let entry = EpochLog {
            epoch,
            loss: loss_sum / n as f64,
            dev: dev_value,
            t: if annealed {
                config.temperature(progress.epoch_fraction)?
            } else {
                1.0
            },
        };
        log(&entry);
        history.push(entry);

        let improved = match progress.best_dev {
            None => true,
            Some(b) if config.higher_is_better() => dev_value > b,
            Some(b) => dev_value < b,
        };
        if improved {
            progress.best_dev = Some(dev_value);
            progress.bad_epochs = 0;
            best = Some(Checkpoint::capture(&model, config, &progress));
        } else {
            progress.bad_epochs += 1;
        }
        if progress.bad_epochs >= config.patience {
            stopped_early = progress.epochs_completed < config.total_epochs;
            break;
        }
    }

    let last = Checkpoint::capture(&model, config, &progress);
    Ok(TrainOutcome {
        // A resumed run that never improves keeps the restored state as best.
        best: best.unwrap_or_else(|| last.clone()),
        last,
        history,
        stopped_early,
    })
}
