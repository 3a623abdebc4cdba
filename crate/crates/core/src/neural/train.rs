use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{encode_pair, label_value};
use super::{AdamState, NeuralError, PairClassifier, PairExample};
use crate::corpus::{Dataset, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Stop after this many epochs without dev-accuracy improvement and
    /// restore the best parameters. Needs a dev set.
    pub patience: Option<usize>,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            lr: 1e-4,
            seed: 0,
            shuffle: true,
            patience: None,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.batch_size == 0 {
            return Err(NeuralError::Schedule("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(NeuralError::Schedule(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.patience == Some(0) {
            return Err(NeuralError::Schedule("patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub trace: Vec<EpochStats>,
    /// Epoch whose parameters were kept (1-based; 0 when nothing ran).
    pub best_epoch: usize,
    pub steps: u64,
}

pub fn encode_dataset(ds: &Dataset, vocab: &Vocabulary, max_len: usize) -> Vec<PairExample> {
    ds.pairs.iter().map(|p| encode_pair(p, vocab, max_len)).collect()
}

pub fn predict_probabilities(model: &PairClassifier, examples: &[PairExample]) -> Result<Vec<f64>, NeuralError> {
    examples.iter().map(|e| model.probability(e)).collect()
}

/// Fraction of labeled examples where `p ≥ 0.5` agrees with the label.
pub fn accuracy_on(model: &PairClassifier, examples: &[PairExample]) -> Result<f64, NeuralError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for e in examples {
        let y = label_value(e)? > 0.5;
        hits += usize::from((model.probability(e)? >= 0.5) == y);
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// Mini-batch Adam on mean BCE, starting from the current parameters.
/// Deterministic for a fixed schedule seed.
pub fn train(
    model: &mut PairClassifier,
    data: &[PairExample],
    schedule: &TrainSchedule,
    dev: Option<&[PairExample]>,
) -> Result<TrainOutcome, NeuralError> {
    schedule.validate()?;
    for e in data {
        label_value(e)?;
    }
    if schedule.patience.is_some() && dev.is_none() {
        return Err(NeuralError::Schedule("early stopping needs a dev set".into()));
    }
    let mut out = TrainOutcome::default();
    if data.is_empty() {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut adam = AdamState::new(model, schedule.lr);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut best: Option<(f64, PairClassifier)> = None;
    let mut since_best = 0;
    for epoch in 1..=schedule.epochs {
        if schedule.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for chunk in order.chunks(schedule.batch_size) {
            let batch: Vec<PairExample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (loss, grads) = model.loss_and_gradient(&batch)?;
            total += loss * batch.len() as f64;
            adam.step(model, &grads);
        }
        let dev_accuracy = dev.map(|d| accuracy_on(model, d)).transpose()?;
        out.trace.push(EpochStats {
            epoch,
            mean_loss: total / data.len() as f64,
            dev_accuracy,
        });
        out.best_epoch = epoch;
        if let (Some(patience), Some(acc)) = (schedule.patience, dev_accuracy) {
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }
    out.steps = adam.t;
    if let Some((acc, params)) = best {
        out.best_epoch = out
            .trace
            .iter()
            .find(|s| s.dev_accuracy == Some(acc))
            .map_or(out.best_epoch, |s| s.epoch);
        *model = params;
    }
    Ok(out)
}

