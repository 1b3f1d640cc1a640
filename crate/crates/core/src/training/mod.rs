//! Forward pass, loss, optimiser, the training loop and checkpoints.

pub mod check;
pub mod checkpoint;
pub mod forward;
pub mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{clamp_intervals, quantize_intervals, BehaviourSequence, DatasetSplit};
use crate::error::{FancError, Result};
use crate::model::FancModel;
use crate::numerics::{Gradients, Scalar};

pub use check::{loss_gradients, model_gradient_check, tiny_instance, GroupCheck};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use forward::{
    forward_sequence, sequence_gradients, sequence_loss, total_loss, CellState, SequenceOutput,
    StepDiagnostics,
};
pub use optim::{adam_step, adam_update, warmup_lr, AdamConfig, AdamState, EarlyStopping};

/// Optimisation settings. What the model computes (softening, clamp, grid,
/// ablation) lives in [`crate::model::ModelConfig`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig<T> {
    pub learning_rate: T,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without strict validation improvement before stopping.
    pub patience: usize,
    pub warmup_epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig<T>,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            learning_rate: T::lit(1e-4),
            batch_size: 4,
            max_epochs: 100,
            patience: 10,
            warmup_epochs: 5,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) || self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(FancError::contract("train_config", format!("invalid settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord<T> {
    /// 1-based.
    pub epoch: usize,
    pub learning_rate: T,
    /// Mean per-prediction loss accumulated over the epoch's batches.
    pub train_loss: T,
    pub valid_loss: T,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters from the best validation epoch.
    pub model: FancModel<T>,
    /// Optimiser moments saved with the best parameters.
    pub adam: AdamState<T>,
    pub history: Vec<EpochRecord<T>>,
    pub best_epoch: usize,
    pub best_valid_loss: T,
    pub stopped_early: bool,
}

impl<T: Scalar> TrainOutcome<T> {
    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            model: self.model.clone(),
            adam: self.adam.clone(),
            epoch: self.best_epoch,
            valid_history: self.history.iter().map(|r| r.valid_loss).collect(),
            train_history: self.history.iter().map(|r| r.train_loss).collect(),
        }
    }
}

/// Clamps intervals to the pad and snaps them to the shared float grid.
pub fn prepare_for_model<T: Scalar>(
    model: &FancModel<T>,
    sequences: &[BehaviourSequence<T>],
) -> Result<Vec<BehaviourSequence<T>>> {
    sequences
        .iter()
        .map(|s| quantize_intervals(&clamp_intervals(s, model.config.pad)?, model.config.grid_step()))
        .collect()
}

fn n_predictions<T: Scalar>(seqs: &[BehaviourSequence<T>]) -> usize {
    seqs.iter().map(|s| s.n_predictions()).sum()
}

/// Mean per-prediction loss.
pub fn mean_loss<T: Scalar>(model: &FancModel<T>, sequences: &[BehaviourSequence<T>]) -> Result<T> {
    let losses: Vec<T> = sequences
        .par_iter()
        .map(|s| forward::forward_sequence(model, s).map(|o| o.loss))
        .collect::<Result<_>>()?;
    let total: T = losses.into_iter().sum();
    Ok(total / T::from_usize_lossy(n_predictions(sequences).max(1)))
}

/// Summed loss and gradients of a batch. Sequences run in parallel; the
/// reduction follows batch order, so the result does not depend on the
/// worker count.
pub fn batch_gradients<T: Scalar>(
    model: &FancModel<T>,
    batch: &[&BehaviourSequence<T>],
) -> Result<(T, Gradients<T>)> {
    let parts: Vec<(T, Gradients<T>)> = batch
        .par_iter()
        .map(|s| forward::sequence_gradients(model, s))
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let (mut loss, mut grads) = iter
        .next()
        .ok_or_else(|| FancError::contract("batch_gradients", "empty batch"))?;
    for (l, g) in iter {
        loss += l;
        grads.accumulate(&g)?;
    }
    Ok((loss, grads))
}

/// Trains with validation loss as the early-stopping monitor.
pub fn train<T: Scalar>(
    model: FancModel<T>,
    split: &DatasetSplit<T>,
    config: &TrainConfig<T>,
) -> Result<TrainOutcome<T>> {
    let valid = prepare_for_model(&model, &split.valid)?;
    train_with(model, split, config, |_, m| mean_loss(m, &valid))
}

/// Training loop with a caller-supplied monitor `validator(epoch, model)`;
/// lower is better.
pub fn train_with<T, V>(
    mut model: FancModel<T>,
    split: &DatasetSplit<T>,
    config: &TrainConfig<T>,
    mut validator: V,
) -> Result<TrainOutcome<T>>
where
    T: Scalar,
    V: FnMut(usize, &FancModel<T>) -> Result<T>,
{
    config.validate()?;
    if split.train.is_empty() || split.valid.is_empty() {
        return Err(FancError::Data("training needs non-empty train and validation sets".into()));
    }
    let train = prepare_for_model(&model, &split.train)?;
    let n_train_pred = T::from_usize_lossy(n_predictions(&train));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(&model.params);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = Vec::new();
    let mut best = (model.clone(), adam.clone());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopped_early = false;

    for epoch in 0..config.max_epochs {
        let lr = warmup_lr(epoch, config.learning_rate, config.warmup_epochs);
        order.shuffle(&mut rng);
        let mut epoch_loss = T::zero();
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&BehaviourSequence<T>> = chunk.iter().map(|&i| &train[i]).collect();
            let tag = |e: FancError| match e {
                FancError::NonFinite(m) => FancError::NonFinite(format!("epoch {}, batch {b}: {m}", epoch + 1)),
                FancError::Integration { step } => FancError::NonFinite(format!(
                    "epoch {}, batch {b}: integration failed at step {step}",
                    epoch + 1
                )),
                other => other,
            };
            let (loss, grads) = batch_gradients(&model, &batch).map_err(tag)?;
            optim::adam_step(&mut model.params, &grads, &mut adam, lr, &config.adam).map_err(tag)?;
            epoch_loss += loss;
        }
        let valid_loss = validator(epoch + 1, &model)?;
        if !valid_loss.is_finite() {
            return Err(FancError::NonFinite(format!("validation loss at epoch {}", epoch + 1)));
        }
        history.push(EpochRecord {
            epoch: epoch + 1,
            learning_rate: lr,
            train_loss: epoch_loss / n_train_pred,
            valid_loss,
        });
        let obs = stopper.observe(epoch + 1, valid_loss);
        if obs.improved {
            best = (model.clone(), adam.clone());
        }
        if obs.stop {
            stopped_early = true;
            break;
        }
    }
    let (best_epoch, best_valid_loss) = stopper.best().expect("at least one epoch ran");
    Ok(TrainOutcome {
        model: best.0,
        adam: best.1,
        history,
        best_epoch,
        best_valid_loss,
        stopped_early,
    })
}
