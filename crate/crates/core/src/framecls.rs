//! Per-frame 6-class CNN producing a confidence sequence per event.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csv::{format_g, push_row};
use crate::error::{Error, Result};
use crate::nnkit::train::{fit, predict, FitConfig, FitLog, Sample};
use crate::nnkit::{Act, AdamConfig, Layer, LossWeights, Model, Network, Tensor};
use crate::rng::SeedStream;
use crate::types::{ConfidenceSequence, Event, Frame, FRAME_HEIGHT, FRAME_WIDTH, NUM_CLASSES};

pub fn frame_network() -> Network {
    let flat = 16 * (FRAME_HEIGHT / 4) * (FRAME_WIDTH / 4);
    Network::new(
        vec![1, FRAME_HEIGHT, FRAME_WIDTH],
        vec![
            Layer::conv2d("conv1", 1, 8, 3, 1),
            Layer::Relu,
            Layer::MaxPool2,
            Layer::conv2d("conv2", 8, 16, 3, 1),
            Layer::Relu,
            Layer::MaxPool2,
            Layer::Flatten,
            Layer::dense("fc1", flat, 64),
            Layer::Relu,
            Layer::dense("fc2", 64, NUM_CLASSES),
        ],
    )
}

/// Fresh He-uniform initialised frame classifier.
pub fn build_frame_model(seed: u64) -> Model {
    let net = frame_network();
    let params = net.init(&mut SeedStream::new(seed).named("init").rng()).expect("static architecture");
    Model::new(net, params).expect("params match their network")
}

/// `[1, H, W]` input with pixels scaled to `[0, 1]`.
pub fn frame_input(frame: &Frame) -> Result<Act> {
    Tensor::new(vec![1, frame.height(), frame.width()], frame.normalized())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub patience: usize,
    /// Evenly spaced frames taken from each training event; 0 keeps all.
    pub frames_per_event: usize,
    /// Same, for validation events.
    pub val_frames_per_event: usize,
    pub seed: u64,
}

impl Default for FrameTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            adam: AdamConfig { lr: 2e-3, ..AdamConfig::default() },
            patience: 5,
            frames_per_event: 8,
            val_frames_per_event: 8,
            seed: 0,
        }
    }
}

/// Indices of `take` frames spread evenly over `n`; all of them when
/// `take == 0` or `take >= n`.
pub fn spread_indices(n: usize, take: usize) -> Vec<usize> {
    if take == 0 || take >= n {
        return (0..n).collect();
    }
    (0..take).map(|i| (2 * i + 1) * n / (2 * take)).collect()
}

/// Frame samples labelled with their event's label.
pub fn frame_samples(events: &[Event], per_event: usize) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for e in events {
        for i in spread_indices(e.len(), per_event) {
            out.push(Sample { input: frame_input(&e.frames()[i])?, label: e.label });
        }
    }
    Ok(out)
}

pub fn train_frame_classifier(train: &[Event], val: &[Event], cfg: &FrameTrainConfig) -> Result<(Model, FitLog)> {
    if train.is_empty() {
        return Err(Error::EmptyInput("no training events"));
    }
    let classes: BTreeSet<_> = train.iter().map(|e| e.label).collect();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument("training set covers a single class".into()));
    }
    if val.iter().any(|e| e.synthetic) {
        return Err(Error::InvalidArgument("synthetic events are not allowed in validation".into()));
    }
    let train_samples = frame_samples(train, cfg.frames_per_event)?;
    let val_samples = frame_samples(val, cfg.val_frames_per_event)?;
    let mut model = build_frame_model(cfg.seed);
    let fit_cfg = FitConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        adam: cfg.adam,
        patience: cfg.patience,
        weights: LossWeights::default(),
    };
    let log = fit(&mut model, &train_samples, &val_samples, &fit_cfg, SeedStream::new(cfg.seed).named("shuffle"))?;
    Ok((model, log))
}

pub fn classify_frames(model: &Model, event: &Event) -> Result<ConfidenceSequence> {
    let inputs = event.frames().iter().map(frame_input).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Act> = inputs.iter().collect();
    Ok(ConfidenceSequence { event_id: event.id, vectors: predict(model, &refs)? })
}

pub fn classify_events(model: &Model, events: &[Event]) -> Result<Vec<ConfidenceSequence>> {
    events.par_iter().map(|e| classify_frames(model, e)).collect()
}

/// Fraction of all frames whose argmax equals the event label.
pub fn frame_accuracy(seqs: &[ConfidenceSequence], events: &[Event]) -> Result<f64> {
    if seqs.len() != events.len() {
        return Err(Error::ShapeMismatch { expected: vec![events.len()], actual: vec![seqs.len()] });
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for (s, e) in seqs.iter().zip(events) {
        hits += s.vectors.iter().filter(|v| v.argmax() == e.label).count();
        total += s.vectors.len();
    }
    if total == 0 {
        return Err(Error::EmptyInput("no frames"));
    }
    Ok(hits as f64 / total as f64)
}

/// `event_id,frame_idx,p0..p5,label` rows, 9 significant digits.
pub fn confidences_csv(seqs: &[ConfidenceSequence], events: &[Event]) -> Result<String> {
    if seqs.len() != events.len() {
        return Err(Error::ShapeMismatch { expected: vec![events.len()], actual: vec![seqs.len()] });
    }
    let mut out = String::from("event_id,frame_idx,p0,p1,p2,p3,p4,p5,label\n");
    for (s, e) in seqs.iter().zip(events) {
        for (i, v) in s.vectors.iter().enumerate() {
            let mut row = vec![s.event_id.to_string(), i.to_string()];
            row.extend(v.probs().iter().map(|p| format_g(*p, 9)));
            row.push(e.label.index().to_string());
            push_row(&mut out, &row);
        }
    }
    Ok(out)
}
