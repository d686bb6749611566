use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::network::{Example, ModelSpec, Regressor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once this many epochs have passed without a new best
    /// validation loss. 0 stops after the first epoch.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1e-4, batch_size: 64, max_epochs: 200, patience: 10, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Invalid(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Invalid("batch_size and max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Parameters at the best validation epoch.
    pub model: Regressor,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub epochs_run: usize,
    /// Validation loss after each epoch.
    pub history: Vec<f64>,
}

// Separate streams for initialization and for shuffling/dropout.
const INIT_STREAM: u64 = 0x5eed_0001;
const TRAIN_STREAM: u64 = 0x5eed_0002;

pub fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    rng
}

/// Initializes a fresh network from `spec` and trains it.
pub fn train(spec: &ModelSpec, cfg: &TrainConfig, train_set: &[Example], val_set: &[Example]) -> Result<TrainOutcome> {
    let model = Regressor::init(spec, &mut init_rng(cfg.seed))?;
    fine_tune(model, cfg, train_set, val_set)
}

/// Trains an existing network with Adam on the batch-mean squared error,
/// keeping the checkpoint with the lowest validation loss. Without a
/// validation set the training loss is monitored instead.
pub fn fine_tune(mut model: Regressor, cfg: &TrainConfig, train_set: &[Example], val_set: &[Example]) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training windows"));
    }
    for ex in train_set.iter().chain(val_set) {
        model.check_example(&ex.inputs)?;
    }
    let monitor = if val_set.is_empty() { train_set } else { val_set };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(TRAIN_STREAM);
    let mut adam = Adam::new(cfg.learning_rate, model.params.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = (model.clone(), f64::INFINITY, 0usize);
    let mut history = Vec::new();
    let mut since_best = 0usize;
    let mut batch: Vec<&Example> = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| &train_set[i]));
            let (_, grad) = model.loss_and_grad(&batch, Some(&mut rng))?;
            adam.update(&mut model.params, &grad);
        }
        let loss = model.loss(monitor)?;
        history.push(loss);
        if loss < best.1 {
            best = (model.clone(), loss, epoch);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= cfg.patience {
            break;
        }
    }
    let epochs_run = history.len();
    Ok(TrainOutcome { model: best.0, best_epoch: best.2, best_loss: best.1, epochs_run, history })
}
