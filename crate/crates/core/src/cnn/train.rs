//! Minibatch training with a stratified validation split.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adadelta::{Adadelta, DEFAULT_EPS, DEFAULT_RHO};
use super::embeddings::EmbeddingTable;
use super::model::{predict, Example, ModelParams, ModelShape, VectorCache, CLASSES, N_CLASSES};
use crate::contexts::Instance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub minibatch: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub val_fraction: f64,
    pub rho: f64,
    pub eps: f64,
    pub init_scale: f64,
    pub filters: usize,
    pub window: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            minibatch: 100,
            dropout: 0.5,
            epochs: 10,
            val_fraction: 0.1,
            rho: DEFAULT_RHO,
            eps: DEFAULT_EPS,
            init_scale: 0.01,
            filters: 100,
            window: 5,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config(m.to_string()));
        if !(self.dropout > 0.0 && self.dropout < 1.0) {
            return fail("dropout must lie in (0, 1)");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail("val_fraction must lie in (0, 1)");
        }
        if self.minibatch == 0 || self.epochs == 0 || self.filters == 0 || self.window == 0 {
            return fail("minibatch, epochs, filters and window must be positive");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) || self.eps <= 0.0 || self.init_scale <= 0.0 {
            return fail("rho must lie in (0, 1); eps and init_scale must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
    pub best_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
    /// Instances per class in `CLASSES` order.
    pub class_counts: [usize; N_CLASSES],
    /// Mean loss of every minibatch, in order.
    pub batch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub report: TrainReport,
    pub fingerprint: String,
}

/// Inverted-dropout mask: each entry is `1 / (1 - p)` with probability
/// `1 - p`, otherwise zero.
pub fn dropout_mask<R: Rng>(rng: &mut R, len: usize, p: f64) -> Vec<f64> {
    let keep = 1.0 - p;
    (0..len).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect()
}

/// 1-based epoch with the highest accuracy; ties go to the earliest.
pub fn best_epoch(accuracies: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &a) in accuracies.iter().enumerate() {
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((i, a));
        }
    }
    best.map(|(i, _)| i + 1)
}

/// SHA-256 over the token sequences and labels, in order.
pub fn data_fingerprint(instances: &[Instance]) -> String {
    let mut h = Sha256::new();
    for inst in instances {
        for t in &inst.tokens {
            h.update(t.as_bytes());
            h.update([0x1f]);
        }
        h.update(inst.label.to_string().as_bytes());
        h.update([0x1e]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Splits indices per class; each class keeps at least one example on each
/// side.
pub fn stratified_split<R: Rng>(classes: &[usize], val_fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for c in 0..N_CLASSES {
        let mut idx: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(rng);
        let n_val = ((idx.len() as f64 * val_fraction).round() as usize).clamp(1, idx.len().saturating_sub(1).max(1));
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

pub fn accuracy(model: &ModelParams, cache: &VectorCache<'_>, examples: &[&Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let correct: Result<Vec<bool>> = examples
        .par_iter()
        .map(|ex| predict(model, cache, &ex.seq).map(|p| p.label == CLASSES[ex.class]))
        .collect();
    Ok(correct?.into_iter().filter(|&c| c).count() as f64 / examples.len() as f64)
}

pub fn train(instances: &[Instance], table: &EmbeddingTable, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut cache = VectorCache::new(table);
    let examples: Vec<Example> = instances
        .iter()
        .map(|inst| Example::new(cache.encode(&inst.tokens)?, inst.label))
        .collect::<Result<_>>()?;
    let mut class_counts = [0usize; N_CLASSES];
    for ex in &examples {
        class_counts[ex.class] += 1;
    }
    for (c, &n) in class_counts.iter().enumerate() {
        if n < 2 {
            return Err(Error::config(format!(
                "class {} has {n} training instances; at least 2 are required",
                CLASSES[c]
            )));
        }
    }

    let shape = ModelShape::new(table.dim(), config.window, config.filters);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ModelParams::random(shape, config.init_scale, &mut rng);
    let classes: Vec<usize> = examples.iter().map(|e| e.class).collect();
    let (mut train_idx, val_idx) = stratified_split(&classes, config.val_fraction, &mut rng);
    let val: Vec<&Example> = val_idx.iter().map(|&i| &examples[i]).collect();

    let mut opt = Adadelta::new(shape, config.rho, config.eps);
    let mut best: Option<(f64, ModelParams)> = None;
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut batch_losses = Vec::new();
    let mut best_epoch = 1;
    for epoch in 1..=config.epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in train_idx.chunks(config.minibatch) {
            let batch: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let masks: Vec<Vec<f64>> = (0..batch.len())
                .map(|_| dropout_mask(&mut rng, shape.filters, config.dropout))
                .collect();
            let (loss, grads) = super::model::loss_and_gradients(&model, &cache, &batch, Some(&masks))?;
            opt.step(&mut model, &grads)?;
            batch_losses.push(loss);
            loss_sum += loss * batch.len() as f64;
        }
        let val_accuracy = accuracy(&model, &cache, &val)?;
        log::info!("epoch {epoch}: train loss {:.4}, validation accuracy {val_accuracy:.4}", loss_sum / train_idx.len() as f64);
        epochs.push(EpochReport {
            epoch,
            train_loss: loss_sum / train_idx.len() as f64,
            val_accuracy,
        });
        if best.as_ref().is_none_or(|(b, _)| val_accuracy > *b) {
            best = Some((val_accuracy, model.clone()));
            best_epoch = epoch;
        }
    }
    let (_, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        report: TrainReport {
            epochs,
            best_epoch,
            n_train: train_idx.len(),
            n_val: val.len(),
            class_counts,
            batch_losses,
        },
        fingerprint: data_fingerprint(instances),
    })
}
