//! Mini-batch training loop with validation-based early stopping.
//!
//! Determinism: batch shuffles and latent noise come from per-epoch ChaCha
//! streams of the schedule seed, per-record gradients are computed in
//! fixed-size chunks, and all reductions run in index order, so results are
//! bit-identical regardless of the rayon thread count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::elbo::ElboSample;
use super::{draw_eps, ModelConfig, VaeModel};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::scenario::Dataset;

/// Records per deterministic gradient chunk (independent of thread count).
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    /// Adam learning rate.
    pub lr: f64,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    /// Seed for shuffling and latent noise.
    pub seed: u64,
    /// Epochs at which the learning rate is multiplied by `lr_decay_factor`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 128,
            patience: 100,
            max_epochs: 1000,
            seed: 0,
            lr_decay_epochs: Vec::new(),
            lr_decay_factor: 1.0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch_size and max_epochs must be >= 1".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "bad learning rate {}",
                self.lr
            )));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        let hits = self.lr_decay_epochs.iter().filter(|&&e| epoch >= e).count();
        self.lr * self.lr_decay_factor.powi(hits as i32)
    }
}

/// Strict-improvement early-stopping counter.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    best: f64,
    epochs_since_improvement: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self::new()
    }
}

impl EarlyStopping {
    pub fn new() -> Self {
        Self {
            best: f64::NEG_INFINITY,
            epochs_since_improvement: 0,
        }
    }

    pub(crate) fn resume(best: f64, since: usize) -> Self {
        Self {
            best,
            epochs_since_improvement: since,
        }
    }

    /// Feeds one validation value; returns whether it strictly improved
    /// (which resets the counter).
    pub fn observe(&mut self, value: f64) -> bool {
        if value > self.best {
            self.best = value;
            self.epochs_since_improvement = 0;
            true
        } else {
            self.epochs_since_improvement += 1;
            false
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.epochs_since_improvement
    }

    pub fn should_stop(&self, patience: usize) -> bool {
        self.epochs_since_improvement >= patience
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_elbo: f64,
    pub val_elbo: f64,
    pub improved: bool,
}

/// Resumable trainer state: model, optimizer, early stopping, best weights.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: VaeModel,
    pub schedule: TrainSchedule,
    pub adam: AdamState,
    pub epoch: usize,
    pub early: EarlyStopping,
    best_params: Vec<f64>,
}

impl Trainer {
    pub fn new(model: VaeModel, schedule: TrainSchedule) -> Result<Self> {
        schedule.validate()?;
        let adam = AdamState::new(model.param_count());
        let best_params = model.params.values.clone();
        Ok(Self {
            model,
            schedule,
            adam,
            epoch: 0,
            early: EarlyStopping::new(),
            best_params,
        })
    }

    pub(crate) fn from_parts(
        model: VaeModel,
        schedule: TrainSchedule,
        adam: AdamState,
        epoch: usize,
        early: EarlyStopping,
        best_params: Vec<f64>,
    ) -> Self {
        Self {
            model,
            schedule,
            adam,
            epoch,
            early,
            best_params,
        }
    }

    pub(crate) fn best_params(&self) -> &[f64] {
        &self.best_params
    }

    /// Fixed per-record training views of a dataset.
    pub fn prepare_samples(cfg: &ModelConfig, ds: &Dataset) -> Result<Vec<ElboSample>> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        ds.records
            .iter()
            .map(|r| ElboSample::from_record(r, cfg.genie, cfg.num_blocks))
            .collect()
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.schedule.max_epochs || self.early.should_stop(self.schedule.patience)
    }

    /// The model at the best validation ELBO seen so far.
    pub fn best_model(&self) -> Result<VaeModel> {
        VaeModel::from_parts(
            self.model.config.clone(),
            super::ModelParams {
                values: self.best_params.clone(),
            },
        )
    }

    /// One full pass over the training samples plus a validation pass.
    pub fn run_epoch(&mut self, train: &[ElboSample], val: &[ElboSample]) -> Result<EpochStats> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let epoch = self.epoch;
        let lr = self.schedule.lr_at(epoch);
        let latent = self.model.config.latent_dim;
        let mut rng = stream_rng(self.schedule.seed, 1 + epoch as u64);

        let mut order: Vec<usize> = (0..train.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut train_elbo_sum = 0.0;
        for (batch_idx, batch) in order.chunks(self.schedule.batch_size).enumerate() {
            let eps: Vec<Vec<f64>> = batch.iter().map(|_| draw_eps(latent, &mut rng)).collect();
            let model = &self.model;
            let chunk_results: Vec<Result<(Vec<f64>, f64)>> = batch
                .par_chunks(GRAD_CHUNK)
                .zip(eps.par_chunks(GRAD_CHUNK))
                .map(|(idx_chunk, eps_chunk)| {
                    // per-record gradients accumulate straight into the
                    // chunk buffer (the backward passes are additive)
                    let mut grad = vec![0.0; model.param_count()];
                    let mut elbo_sum = 0.0;
                    for (&i, e) in idx_chunk.iter().zip(eps_chunk) {
                        let eval = super::elbo::elbo(model, &train[i], e, Some(&mut grad))?;
                        elbo_sum += eval.elbo;
                    }
                    Ok((grad, elbo_sum))
                })
                .collect();

            let mut grad = vec![0.0; self.model.param_count()];
            let mut batch_elbo = 0.0;
            for res in chunk_results {
                let (g, e) = res.map_err(|err| match err {
                    Error::NonFinite { .. } => Error::NonFinite {
                        context: format!("epoch {epoch}, batch {batch_idx}"),
                    },
                    other => other,
                })?;
                for (acc, v) in grad.iter_mut().zip(&g) {
                    *acc += v;
                }
                batch_elbo += e;
            }
            let inv = 1.0 / batch.len() as f64;
            for g in grad.iter_mut() {
                *g *= inv;
            }
            adam_step(&mut self.model.params.values, &grad, &mut self.adam, lr);
            train_elbo_sum += batch_elbo;
        }
        let train_elbo = train_elbo_sum / train.len() as f64;

        // validation with fixed per-record noise (stream 0 of the seed)
        let val_elbo = {
            let mut val_rng = stream_rng(self.schedule.seed, 0);
            let val_eps: Vec<Vec<f64>> = (0..val.len())
                .map(|_| draw_eps(latent, &mut val_rng))
                .collect();
            let model = &self.model;
            let sums: Vec<Result<f64>> = val
                .par_chunks(GRAD_CHUNK)
                .zip(val_eps.par_chunks(GRAD_CHUNK))
                .map(|(samples, eps_chunk)| {
                    let mut acc = 0.0;
                    for (s, e) in samples.iter().zip(eps_chunk) {
                        acc += super::elbo::elbo(model, s, e, None)?.elbo;
                    }
                    Ok(acc)
                })
                .collect();
            let mut total = 0.0;
            for s in sums {
                total += s?;
            }
            total / val.len() as f64
        };

        let improved = self.early.observe(val_elbo);
        if improved {
            self.best_params.copy_from_slice(&self.model.params.values);
        }
        self.epoch += 1;
        Ok(EpochStats {
            epoch,
            train_elbo,
            val_elbo,
            improved,
        })
    }

    /// Runs epochs until early stopping or the epoch cap, reporting each
    /// epoch to the callback. Returns the best model.
    pub fn fit(
        &mut self,
        train: &[ElboSample],
        val: &[ElboSample],
        mut on_epoch: impl FnMut(&EpochStats),
    ) -> Result<VaeModel> {
        while !self.finished() {
            let stats = self.run_epoch(train, val)?;
            on_epoch(&stats);
        }
        self.best_model()
    }
}

/// Trains a fresh model on the given datasets.
pub fn train(
    config: ModelConfig,
    train_ds: &Dataset,
    val_ds: &Dataset,
    schedule: TrainSchedule,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<(VaeModel, Vec<EpochStats>)> {
    let model = VaeModel::new(config.clone())?;
    let train_samples = Trainer::prepare_samples(&config, train_ds)?;
    let val_samples = Trainer::prepare_samples(&config, val_ds)?;
    let mut trainer = Trainer::new(model, schedule)?;
    let mut history = Vec::new();
    let mut cb = on_epoch;
    let best = trainer.fit(&train_samples, &val_samples, |s| {
        history.push(*s);
        cb(s);
    })?;
    Ok((best, history))
}
