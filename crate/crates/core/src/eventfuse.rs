//! Event-level decisions from per-frame confidence sequences: plain
//! averaging, or a small 1-D convolutional network over the sequence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csv::{format_g, push_row};
use crate::error::{Error, Result};
use crate::nnkit::train::{fit, FitConfig, FitLog, Sample};
use crate::nnkit::{softmax_confidence, Act, AdamConfig, Layer, LossWeights, Model, Network, Tensor};
use crate::rng::SeedStream;
use crate::types::{ClassLabel, ConfidenceSequence, ConfidenceVector, NUM_CLASSES};

pub const WINDOW: usize = 7;
pub const FILTERS: usize = 16;

pub fn fuse_by_average(seq: &ConfidenceSequence) -> Result<ConfidenceVector> {
    if seq.vectors.is_empty() {
        return Err(Error::EmptyInput("empty confidence sequence"));
    }
    let mut sum = [0.0; NUM_CLASSES];
    for v in &seq.vectors {
        for (s, p) in sum.iter_mut().zip(v.probs()) {
            *s += p;
        }
    }
    let n = seq.vectors.len() as f64;
    ConfidenceVector::new(sum.map(|s| s / n))
}

pub fn fusion_network() -> Network {
    Network::new(
        vec![NUM_CLASSES, 0],
        vec![
            Layer::conv1d("conv", NUM_CLASSES, FILTERS, WINDOW),
            Layer::Relu,
            Layer::GlobalMeanMax,
            Layer::dense("fc", 2 * FILTERS, NUM_CLASSES),
        ],
    )
}

pub fn build_fusion_model(seed: u64) -> Model {
    let net = fusion_network();
    let params = net.init(&mut SeedStream::new(seed).named("init").rng()).expect("static architecture");
    Model::new(net, params).expect("params match their network")
}

/// Sequences shorter than the window get `(WINDOW - n) / 2` copies of the
/// first vector in front and the rest as copies of the last one behind.
pub fn pad_to_window(vectors: &[ConfidenceVector]) -> Vec<ConfidenceVector> {
    let n = vectors.len();
    if n == 0 || n >= WINDOW {
        return vectors.to_vec();
    }
    let front = (WINDOW - n) / 2;
    let back = WINDOW - n - front;
    let mut out = vec![vectors[0]; front];
    out.extend_from_slice(vectors);
    out.extend(std::iter::repeat_n(vectors[n - 1], back));
    out
}

/// `[6, T]` network input, channel-major, padded to the window length.
pub fn sequence_input(seq: &ConfidenceSequence) -> Result<Act> {
    if seq.vectors.is_empty() {
        return Err(Error::EmptyInput("empty confidence sequence"));
    }
    let padded = pad_to_window(&seq.vectors);
    let t = padded.len();
    let mut data = vec![0.0; NUM_CLASSES * t];
    for (i, v) in padded.iter().enumerate() {
        for c in 0..NUM_CLASSES {
            data[c * t + i] = v.get(ClassLabel::ALL[c]);
        }
    }
    Tensor::new(vec![NUM_CLASSES, t], data)
}

pub fn fuse_by_network(model: &Model, seq: &ConfidenceSequence) -> Result<ConfidenceVector> {
    softmax_confidence(model.forward(&sequence_input(seq)?)?.data())
}

pub fn fuse_all_by_network(model: &Model, seqs: &[ConfidenceSequence]) -> Result<Vec<ConfidenceVector>> {
    seqs.par_iter().map(|s| fuse_by_network(model, s)).collect()
}

pub fn fuse_all_by_average(seqs: &[ConfidenceSequence]) -> Result<Vec<ConfidenceVector>> {
    seqs.iter().map(fuse_by_average).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionTrainConfig {
    /// Class weights of the loss; only jellyfish and seaweed differ from 1
    /// when built by [`FusionTrainConfig::with_xy`].
    pub loss_weights: LossWeights,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub patience: usize,
    pub seed: u64,
}

impl FusionTrainConfig {
    pub fn with_xy(x: f64, y: f64) -> Result<Self> {
        Ok(Self { loss_weights: LossWeights::jellyfish_seaweed(x, y)?, ..Self::default() })
    }
}

impl Default for FusionTrainConfig {
    fn default() -> Self {
        Self {
            loss_weights: LossWeights::jellyfish_seaweed(2.0, 1.0).expect("positive"),
            epochs: 60,
            batch_size: 16,
            adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
            patience: 15,
            seed: 0,
        }
    }
}

fn samples(data: &[(ConfidenceSequence, ClassLabel)]) -> Result<Vec<Sample>> {
    data.iter().map(|(s, l)| Ok(Sample { input: sequence_input(s)?, label: *l })).collect()
}

/// Trains a fresh fusion network. Sequences must come from a frame
/// classifier that stays fixed afterwards. An empty `val` trains for the
/// full epoch budget.
pub fn train_fusion(
    train: &[(ConfidenceSequence, ClassLabel)],
    val: &[(ConfidenceSequence, ClassLabel)],
    cfg: &FusionTrainConfig,
) -> Result<(Model, FitLog)> {
    if train.is_empty() {
        return Err(Error::EmptyInput("no training sequences"));
    }
    let mut model = build_fusion_model(cfg.seed);
    let fit_cfg = FitConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        adam: cfg.adam,
        patience: cfg.patience,
        weights: cfg.loss_weights,
    };
    let log = fit(&mut model, &samples(train)?, &samples(val)?, &fit_cfg, SeedStream::new(cfg.seed).named("shuffle"))?;
    Ok((model, log))
}

/// `event_id,pred,conf0..conf5,label` rows.
pub fn predictions_csv(event_ids: &[u64], preds: &[ConfidenceVector], labels: &[ClassLabel]) -> Result<String> {
    if preds.len() != event_ids.len() || labels.len() != event_ids.len() {
        return Err(Error::ShapeMismatch { expected: vec![event_ids.len()], actual: vec![preds.len(), labels.len()] });
    }
    let mut out = format!("{PREDICTIONS_HEADER}\n");
    for ((id, p), l) in event_ids.iter().zip(preds).zip(labels) {
        let mut row = vec![id.to_string(), p.argmax().index().to_string()];
        row.extend(p.probs().iter().map(|v| format_g(*v, 9)));
        row.push(l.index().to_string());
        push_row(&mut out, &row);
    }
    Ok(out)
}

const PREDICTIONS_HEADER: &str = "event_id,pred,conf0,conf1,conf2,conf3,conf4,conf5,label";

/// Columns of a predictions file, as written by [`predictions_csv`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionTable {
    pub event_ids: Vec<u64>,
    pub preds: Vec<ConfidenceVector>,
    pub labels: Vec<ClassLabel>,
}

/// Parses [`predictions_csv`] output. `pred` is checked against the
/// confidences up to the 9-digit rounding of the file.
pub fn read_predictions_csv(text: &str) -> Result<PredictionTable> {
    let mut lines = text.lines();
    if lines.next() != Some(PREDICTIONS_HEADER) {
        return Err(Error::InvalidArgument(format!("predictions header must be {PREDICTIONS_HEADER:?}")));
    }
    let mut table = PredictionTable::default();
    for (i, line) in lines.enumerate() {
        let bad = |what: &str| Error::InvalidArgument(format!("predictions row {}: {what}", i + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != NUM_CLASSES + 3 {
            return Err(bad("wrong field count"));
        }
        let id: u64 = fields[0].parse().map_err(|_| bad("bad event_id"))?;
        let pred: usize = fields[1].parse().map_err(|_| bad("bad pred"))?;
        let mut probs = [0.0; NUM_CLASSES];
        for (p, f) in probs.iter_mut().zip(&fields[2..2 + NUM_CLASSES]) {
            *p = f.parse().map_err(|_| bad("bad confidence"))?;
        }
        let label: usize = fields[NUM_CLASSES + 2].parse().map_err(|_| bad("bad label"))?;
        let v = ConfidenceVector::new(probs)?;
        if pred >= NUM_CLASSES || v.probs()[pred] < v.max_prob() - 1e-8 {
            return Err(bad("pred disagrees with confidences"));
        }
        table.event_ids.push(id);
        table.preds.push(v);
        table.labels.push(ClassLabel::from_index(label)?);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(vs: &[[f64; 6]]) -> ConfidenceSequence {
        ConfidenceSequence { event_id: 0, vectors: vs.iter().map(|v| ConfidenceVector::new(*v).unwrap()).collect() }
    }

    #[test]
    fn average_of_two_one_hots_ties_to_lowest() {
        let s = seq(&[[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0, 0.0, 0.0]]);
        let v = fuse_by_average(&s).unwrap();
        assert_eq!(v.probs(), &[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(v.argmax(), ClassLabel::Background);
    }

    #[test]
    fn empty_sequence_rejected() {
        let s = ConfidenceSequence { event_id: 1, vectors: vec![] };
        assert!(fuse_by_average(&s).is_err());
        assert!(fuse_by_network(&build_fusion_model(0), &s).is_err());
    }

    #[test]
    fn padding_layout() {
        let a = ConfidenceVector::one_hot(ClassLabel::Artefacts);
        let f = ConfidenceVector::one_hot(ClassLabel::Fish);
        let padded = pad_to_window(&[a, a, f, f]);
        assert_eq!(padded, vec![a, a, a, f, f, f, f]);
        assert_eq!(pad_to_window(&[a; 9]).len(), 9);
    }

    #[test]
    fn parameter_count() {
        assert_eq!(build_fusion_model(0).params().param_count(), 6 * 7 * 16 + 16 + 32 * 6 + 6);
    }
}
