//! Minibatch Adam training of softmax classifiers with weighted
//! cross-entropy and early stopping on validation accuracy.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::layers::Act;
use super::loss::{softmax_confidence, weighted_xent_with_grad, LossWeights};
use super::network::Model;
use super::tensor::ModelParams;
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::types::{ClassLabel, ConfidenceVector};

/// Samples per gradient chunk. Chunks are summed in index order, so results
/// do not depend on the number of worker threads.
const CHUNK: usize = 8;

#[derive(Debug, Clone)]
pub struct Sample {
    pub input: Act,
    pub label: ClassLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Stop after this many epochs without a new best validation accuracy.
    pub patience: usize,
    pub weights: LossWeights,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 32, adam: AdamConfig::default(), patience: 5, weights: LossWeights::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept (best validation accuracy).
    pub best_epoch: usize,
}

/// Summed loss, correct count and summed gradients over `samples`.
pub fn batch_gradient(
    model: &Model,
    samples: &[&Sample],
    weights: &LossWeights,
) -> Result<(f64, usize, ModelParams<f64>)> {
    let parts: Vec<Result<(f64, usize, ModelParams<f64>)>> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = model.zero_grads();
            let (mut loss, mut correct) = (0.0, 0);
            for s in chunk {
                let trace = model.trace(&s.input)?;
                let logits = trace.output().data();
                let (l, g) = weighted_xent_with_grad(logits, s.label, weights)?;
                loss += l;
                correct += usize::from(argmax(logits) == s.label.index());
                model.backward(&trace, &g, &mut grads)?;
            }
            Ok((loss, correct, grads))
        })
        .collect();
    let mut total = model.zero_grads();
    let (mut loss, mut correct) = (0.0, 0);
    for part in parts {
        let (l, c, g) = part?;
        loss += l;
        correct += c;
        total.add_scaled(&g, 1.0);
    }
    Ok((loss, correct, total))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &Model, inputs: &[&Act]) -> Result<Vec<ConfidenceVector>> {
    inputs
        .par_iter()
        .map(|x| softmax_confidence(model.forward(x)?.data()))
        .collect()
}

pub fn accuracy(model: &Model, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("accuracy of an empty sample set"));
    }
    let inputs: Vec<&Act> = samples.iter().map(|s| &s.input).collect();
    let preds = predict(model, &inputs)?;
    let hits = preds.iter().zip(samples).filter(|(p, s)| p.argmax() == s.label).count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Trains `model` in place. With a validation set, the parameters of the
/// best validation epoch are restored at the end.
pub fn fit(model: &mut Model, train: &[Sample], val: &[Sample], cfg: &FitConfig, stream: SeedStream) -> Result<FitLog> {
    if train.is_empty() {
        return Err(Error::EmptyInput("no training samples"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidArgument("epochs and batch_size must be positive".into()));
    }
    let mut state = AdamState::new(model.params());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ModelParams<f32>)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut stream.child(epoch as u64).rng());
        let (mut loss_sum, mut correct) = (0.0, 0);
        for batch in order.chunks(cfg.batch_size) {
            let samples: Vec<&Sample> = batch.iter().map(|&i| &train[i]).collect();
            let (l, c, mut grads) = batch_gradient(model, &samples, &cfg.weights)?;
            grads.scale(1.0 / samples.len() as f64);
            loss_sum += l;
            correct += c;
            model.update_params(|p| adam_step(p, &grads, &mut state, &cfg.adam))?;
        }
        let val_accuracy = if val.is_empty() { None } else { Some(accuracy(model, val)?) };
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_accuracy,
        });
        if let Some(acc) = val_accuracy {
            if best.as_ref().is_none_or(|b| acc > b.0) {
                best = Some((acc, epoch, model.params().clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
    }
    let best_epoch = match best {
        Some((_, epoch, params)) => {
            model.set_params(params)?;
            epoch
        }
        None => log.len() - 1,
    };
    Ok(FitLog { epochs: log, best_epoch })
}
