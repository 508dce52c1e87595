use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::Tensor3;
use super::network::{BackboneParams, LabelMap};
use super::optim::{Adadelta, AdadeltaConfig};
use super::real::Real;
use crate::error::{ensure, Error, Result};

/// One input/target pair.
#[derive(Debug, Clone)]
pub struct TrainRecord<T> {
    pub input: Tensor3<T>,
    pub target: LabelMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed of the per-epoch shuffle.
    pub seed: u64,
    pub optimizer: AdadeltaConfig,
    /// Median-frequency weights from the training targets when absent.
    pub class_weights: Option<Vec<f64>>,
    pub reduction: Reduction,
}

/// How per-pixel losses are combined into the objective whose gradient the
/// optimizer sees. The reported loss is always the pixel mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Mean,
    #[default]
    Sum,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 8,
            seed: 0,
            optimizer: AdadeltaConfig::default(),
            class_weights: None,
            reduction: Reduction::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample loss of each epoch, measured during the epoch.
    pub loss_history: Vec<f64>,
    pub class_weights: Vec<f64>,
}

/// `w_c = median(f) / f_c`, where `f_c` is the pixel frequency of class `c`
/// over the images that contain it. Classes that never occur get weight 1.
pub fn median_frequency_weights(targets: &[&LabelMap], num_classes: usize) -> Vec<f64> {
    let mut count = vec![0u64; num_classes];
    let mut exposure = vec![0u64; num_classes];
    let mut present = vec![false; num_classes];
    for t in targets {
        present.iter_mut().for_each(|p| *p = false);
        for &y in &t.labels {
            let y = y as usize;
            if y < num_classes {
                count[y] += 1;
                present[y] = true;
            }
        }
        for c in 0..num_classes {
            if present[c] {
                exposure[c] += t.labels.len() as u64;
            }
        }
    }
    let freq: Vec<Option<f64>> = (0..num_classes)
        .map(|c| (count[c] > 0).then(|| count[c] as f64 / exposure[c] as f64))
        .collect();
    let mut seen: Vec<f64> = freq.iter().flatten().copied().collect();
    if seen.is_empty() {
        return vec![1.0; num_classes];
    }
    seen.sort_by(|a, b| a.total_cmp(b));
    let n = seen.len();
    let median = if n % 2 == 1 {
        seen[n / 2]
    } else {
        0.5 * (seen[n / 2 - 1] + seen[n / 2])
    };
    freq.iter().map(|f| f.map_or(1.0, |f| median / f)).collect()
}

/// Mini-batch ADADELTA on the mean batch loss.
///
/// Per-sample gradients within a batch run in parallel and are summed in
/// batch order, so results do not depend on the thread count.
pub fn train<T: Real>(
    params: &mut BackboneParams<T>,
    records: &[TrainRecord<T>],
    config: &TrainConfig,
) -> Result<TrainReport> {
    train_with_progress(params, records, config, |_, _| {})
}

pub fn train_with_progress<T: Real>(
    params: &mut BackboneParams<T>,
    records: &[TrainRecord<T>],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    let mut trainer = Trainer::new(params, records, config)?;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let loss = trainer.epoch(params)?;
        info!("epoch {}/{}: loss {:.6}", epoch + 1, config.epochs, loss);
        on_epoch(epoch, loss);
        history.push(loss);
    }
    Ok(TrainReport {
        loss_history: history,
        class_weights: trainer.class_weights,
    })
}

/// Training state carried between epochs: optimizer accumulators and the
/// shuffle generator.
pub struct Trainer<'a, T> {
    records: &'a [TrainRecord<T>],
    batch_size: usize,
    reduction: Reduction,
    pub class_weights: Vec<f64>,
    optimizer: Adadelta,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    epochs_done: usize,
}

impl<'a, T: Real> Trainer<'a, T> {
    pub fn new(params: &BackboneParams<T>, records: &'a [TrainRecord<T>], config: &TrainConfig) -> Result<Self> {
        ensure!(!records.is_empty(), InvalidInput, "training set is empty");
        ensure!(config.batch_size >= 1, InvalidConfig, "batch size must be positive");
        params.validate()?;
        let classes = params.config.num_classes;
        let class_weights = match &config.class_weights {
            Some(w) => {
                ensure!(
                    w.len() == classes && w.iter().all(|v| v.is_finite() && *v >= 0.0),
                    InvalidConfig,
                    "class weights must be {classes} finite non-negative values"
                );
                w.clone()
            }
            None => {
                let targets: Vec<&LabelMap> = records.iter().map(|r| &r.target).collect();
                median_frequency_weights(&targets, classes)
            }
        };
        debug!("class weights {class_weights:?}");
        Ok(Self {
            records,
            batch_size: config.batch_size,
            reduction: config.reduction,
            class_weights,
            optimizer: Adadelta::new(params, config.optimizer)?,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            order: (0..records.len()).collect(),
            epochs_done: 0,
        })
    }

    /// One pass over the shuffled records; returns the mean sample loss.
    pub fn epoch(&mut self, params: &mut BackboneParams<T>) -> Result<f64> {
        self.order.shuffle(&mut self.rng);
        let mut epoch_loss = 0.0;
        for batch in self.order.chunks(self.batch_size) {
            let results: Vec<Result<(f64, BackboneParams<T>)>> = batch
                .par_iter()
                .map(|&i| params.loss_and_gradients(&self.records[i].input, &self.records[i].target, &self.class_weights))
                .collect();
            let mut total = params.zeros_like();
            let mut scale = 1.0 / batch.len() as f64;
            if self.reduction == Reduction::Sum {
                scale *= self.records[batch[0]].target.labels.len() as f64;
            }
            let scale = T::from_f64(scale);
            for r in results {
                let (loss, grads) = r?;
                epoch_loss += loss;
                for (acc, g) in total.tensors.iter_mut().zip(&grads.tensors) {
                    for (a, &v) in acc.data.iter_mut().zip(&g.data) {
                        *a += v * scale;
                    }
                }
            }
            self.optimizer.step(params, &total)?;
        }
        self.epochs_done += 1;
        let mean = epoch_loss / self.records.len() as f64;
        if !mean.is_finite() || !params.is_finite() {
            return Err(Error::NonFinite(format!("training diverged in epoch {}", self.epochs_done)));
        }
        Ok(mean)
    }
}
